//! Analytic click model of the four-detector passive-basis receiver.
//!
//! A weak coherent pulse of mean photon number `mu` is split passively into
//! the Z basis (ports H and V) with probability `p_z` and the X basis (ports
//! D and A) otherwise. Each threshold detector clicks with probability
//!
//! ```text
//! p_k = 1 - exp(-mu * p_basis * eta_k * M_k) * (1 - y_0)
//! ```
//!
//! where `M_k` is the probability that the incoming state collapses onto
//! port `k` within its basis. Because the Poissonian light splits into
//! independent Poissonian modes, the four detectors click independently and
//! every joint event probability is a product of the `p_k`.

use serde::{Deserialize, Serialize};

use crate::error::{check_probability, Error, Result};

/// Physical and protocol parameters of the receiver.
///
/// Complementary probabilities (`p_x`, `m1_z`, `m_plus_x`) are derived on
/// demand and never stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemModel {
    /// Mean photon number per pulse.
    pub mu: f64,
    /// Pulse repetition rate in Hz.
    pub f_hz: f64,
    /// Accumulation time in seconds.
    pub t_s: f64,
    /// Probability that a photon is routed to the Z basis.
    pub p_z: f64,
    /// Detection efficiency of the H port.
    pub eta_0: f64,
    /// Detection efficiency of the V port.
    pub eta_1: f64,
    /// Detection efficiency of the D port.
    pub eta_plus: f64,
    /// Detection efficiency of the A port.
    pub eta_minus: f64,
    /// Dark-count probability per detection gate.
    pub y_0: f64,
    /// Probability of collapsing onto H under a Z measurement.
    pub m0_z: f64,
    /// Probability of the error outcome (A) under an X measurement.
    pub m_minus_x: f64,
}

impl SystemModel {
    /// Calibrated parameters of the integrated receiver at the given mean
    /// photon number: 50 MHz for 200 s, 52.83% Z-basis routing, port
    /// efficiencies 1.76/1.56/1.79/1.79%, 47.18% H collapse, 0.12% intrinsic
    /// X error, no dark counts.
    pub fn reference(mu: f64) -> Self {
        SystemModel {
            mu,
            f_hz: 50.0e6,
            t_s: 200.0,
            p_z: 0.5283,
            eta_0: 0.0176,
            eta_1: 0.0156,
            eta_plus: 0.0179,
            eta_minus: 0.0179,
            y_0: 0.0,
            m0_z: 0.4718,
            m_minus_x: 0.0012,
        }
    }

    pub fn p_x(&self) -> f64 {
        1.0 - self.p_z
    }

    pub fn m1_z(&self) -> f64 {
        1.0 - self.m0_z
    }

    pub fn m_plus_x(&self) -> f64 {
        1.0 - self.m_minus_x
    }

    /// Number of pulses sent during the accumulation window, `f * t`.
    pub fn pulses(&self) -> f64 {
        self.f_hz * self.t_s
    }

    /// Full validation, including a strictly positive accumulation window.
    pub fn validate(&self) -> Result<()> {
        self.validate_timing()?;
        if self.t_s == 0.0 {
            return Err(Error::invalid("t_s", self.t_s, "must be > 0"));
        }
        Ok(())
    }

    /// Like [`validate`](Self::validate) but lets `t_s` be zero.
    fn validate_timing(&self) -> Result<()> {
        self.validate_optics()?;
        if !(self.f_hz.is_finite() && self.f_hz > 0.0) {
            return Err(Error::invalid("f_hz", self.f_hz, "must be finite and > 0"));
        }
        if !(self.t_s.is_finite() && self.t_s >= 0.0) {
            return Err(Error::invalid("t_s", self.t_s, "must be finite and >= 0"));
        }
        Ok(())
    }

    /// The fields that enter the per-pulse click probabilities.
    fn validate_optics(&self) -> Result<()> {
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(Error::invalid("mu", self.mu, "must be finite and >= 0"));
        }
        check_probability("p_z", self.p_z)?;
        check_probability("eta_0", self.eta_0)?;
        check_probability("eta_1", self.eta_1)?;
        check_probability("eta_plus", self.eta_plus)?;
        check_probability("eta_minus", self.eta_minus)?;
        check_probability("y_0", self.y_0)?;
        check_probability("m0_z", self.m0_z)?;
        check_probability("m_minus_x", self.m_minus_x)?;
        Ok(())
    }
}

/// Per-pulse click probability of each detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClickProbabilities {
    pub p0: f64,
    pub p1: f64,
    pub p_plus: f64,
    pub p_minus: f64,
}

impl ClickProbabilities {
    fn validate(&self) -> Result<()> {
        check_probability("p0", self.p0)?;
        check_probability("p1", self.p1)?;
        check_probability("p_plus", self.p_plus)?;
        check_probability("p_minus", self.p_minus)
    }
}

/// Per-pulse probabilities of the exclusive click patterns.
///
/// A Z event requires at least one Z click and no X click (and vice versa),
/// so cross-basis coincidences belong to neither basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisEventProbabilities {
    pub q_h: f64,
    pub q_v: f64,
    pub q_d: f64,
    pub q_a: f64,
    pub q_z_single: f64,
    pub q_z_double: f64,
    pub q_x_single: f64,
    pub q_x_double: f64,
    /// At least one click in each basis.
    pub q_cross: f64,
    /// No detector fires.
    pub q_vacuum: f64,
}

/// Expected event counts over `f * t` pulses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedTally {
    pub n_h_s: f64,
    pub n_v_s: f64,
    pub n_d_s: f64,
    pub n_a_s: f64,
    pub n_z_d: f64,
    pub n_x_d: f64,
    pub n_z_tol: f64,
    pub n_x_tol: f64,
}

/// `1 - exp(-a) * (1 - y0)`. Without dark counts `expm1` keeps small
/// probabilities accurate; with them `p >= y0` and the direct form is exact
/// enough and monotone under rounding.
fn click(exponent: f64, y_0: f64) -> f64 {
    if y_0 == 0.0 {
        -(-exponent).exp_m1()
    } else {
        1.0 - (1.0 - y_0) * (-exponent).exp()
    }
}

pub fn click_probabilities(model: &SystemModel) -> Result<ClickProbabilities> {
    model.validate_optics()?;
    let SystemModel { mu, y_0, .. } = *model;
    let (p_z, p_x) = (model.p_z, model.p_x());
    Ok(ClickProbabilities {
        p0: click(mu * p_z * model.eta_0 * model.m0_z, y_0),
        p1: click(mu * p_z * model.eta_1 * model.m1_z(), y_0),
        p_plus: click(mu * p_x * model.eta_plus * model.m_plus_x(), y_0),
        p_minus: click(mu * p_x * model.eta_minus * model.m_minus_x, y_0),
    })
}

pub fn basis_event_probabilities(p: &ClickProbabilities) -> Result<BasisEventProbabilities> {
    p.validate()?;
    let ClickProbabilities {
        p0,
        p1,
        p_plus,
        p_minus,
    } = *p;
    let no_z = (1.0 - p0) * (1.0 - p1);
    let no_x = (1.0 - p_plus) * (1.0 - p_minus);
    let q_h = p0 * (1.0 - p1) * no_x;
    let q_v = p1 * (1.0 - p0) * no_x;
    let q_d = p_plus * (1.0 - p_minus) * no_z;
    let q_a = p_minus * (1.0 - p_plus) * no_z;
    Ok(BasisEventProbabilities {
        q_h,
        q_v,
        q_d,
        q_a,
        q_z_single: q_h + q_v,
        q_z_double: p0 * p1 * no_x,
        q_x_single: q_d + q_a,
        q_x_double: p_plus * p_minus * no_z,
        q_cross: (1.0 - no_z) * (1.0 - no_x),
        q_vacuum: no_z * no_x,
    })
}

/// X-basis bit error rate: error-port singles plus half of the double
/// clicks, over every X-basis click.
pub fn x_basis_qber(p: &ClickProbabilities) -> Result<f64> {
    p.validate()?;
    let ClickProbabilities {
        p_plus, p_minus, ..
    } = *p;
    let errors = p_minus * (1.0 - p_plus) + 0.5 * p_plus * p_minus;
    let total = p_minus * (1.0 - p_plus) + p_plus * (1.0 - p_minus) + p_plus * p_minus;
    if total <= 0.0 {
        return Err(Error::Degenerate(
            "no X-basis click is possible, QBER undefined".into(),
        ));
    }
    Ok(errors / total)
}

pub fn expected_tally(model: &SystemModel) -> Result<ExpectedTally> {
    model.validate_timing()?;
    let q = basis_event_probabilities(&click_probabilities(model)?)?;
    let pulses = model.pulses();
    let n_h_s = pulses * q.q_h;
    let n_v_s = pulses * q.q_v;
    let n_d_s = pulses * q.q_d;
    let n_a_s = pulses * q.q_a;
    let n_z_d = pulses * q.q_z_double;
    let n_x_d = pulses * q.q_x_double;
    Ok(ExpectedTally {
        n_h_s,
        n_v_s,
        n_d_s,
        n_a_s,
        n_z_d,
        n_x_d,
        n_z_tol: n_h_s + n_v_s + n_z_d,
        n_x_tol: n_d_s + n_a_s + n_x_d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    // Frozen from a 40-digit evaluation of the click model at mu = 36.58.
    const P0: f64 = 0.148256959235;
    const P1: f64 = 0.147206815356;
    const P_PLUS: f64 = 0.265444729167;
    const P_MINUS: f64 = 3.70564127427e-4;

    #[test]
    fn no_light_no_clicks() {
        let p = click_probabilities(&SystemModel::reference(0.0)).unwrap();
        assert_eq!((p.p0, p.p1, p.p_plus, p.p_minus), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn certain_dark_counts() {
        let mut model = SystemModel::reference(36.58);
        model.y_0 = 1.0;
        let p = click_probabilities(&model).unwrap();
        assert_eq!((p.p0, p.p1, p.p_plus, p.p_minus), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn reference_click_probabilities() {
        let p = click_probabilities(&SystemModel::reference(36.58)).unwrap();
        assert!(rel(p.p0, P0) < 1e-10);
        assert!(rel(p.p1, P1) < 1e-10);
        assert!(rel(p.p_plus, P_PLUS) < 1e-10);
        assert!(rel(p.p_minus, P_MINUS) < 1e-10);
    }

    #[test]
    fn rejects_out_of_range_fields() {
        let mut model = SystemModel::reference(1.0);
        model.eta_0 = 1.5;
        match click_probabilities(&model) {
            Err(Error::InvalidParameter { field, .. }) => assert_eq!(field, "eta_0"),
            other => panic!("expected eta_0 rejection, got {other:?}"),
        }
        model = SystemModel::reference(-1.0);
        assert!(click_probabilities(&model).is_err());
        model = SystemModel::reference(1.0);
        model.f_hz = 0.0;
        assert!(expected_tally(&model).is_err());
        model = SystemModel::reference(1.0);
        model.t_s = 0.0;
        assert!(model.validate().is_err());
    }

    #[test]
    fn event_probabilities_edge_cases() {
        let zero = ClickProbabilities {
            p0: 0.0,
            p1: 0.0,
            p_plus: 0.0,
            p_minus: 0.0,
        };
        let q = basis_event_probabilities(&zero).unwrap();
        assert_eq!(
            q.q_z_single + q.q_z_double + q.q_x_single + q.q_x_double,
            0.0
        );
        assert_eq!(q.q_vacuum, 1.0);

        let both_z = ClickProbabilities {
            p0: 1.0,
            p1: 1.0,
            ..zero
        };
        let q = basis_event_probabilities(&both_z).unwrap();
        assert_eq!(q.q_z_double, 1.0);
        assert_eq!(q.q_z_single, 0.0);
    }

    #[test]
    fn reference_event_probabilities() {
        let p = click_probabilities(&SystemModel::reference(36.58)).unwrap();
        let q = basis_event_probabilities(&p).unwrap();
        assert!(rel(q.q_z_single, 0.184903421726) < 1e-9);
        assert!(rel(q.q_z_double, 0.0160253130249) < 1e-9);
        assert!(rel(q.q_a, 1.97715250401e-4) < 1e-9);
        assert!(rel(q.q_h, 0.092837262299) < 1e-9);
    }

    #[test]
    fn qber_edge_cases() {
        let p = ClickProbabilities {
            p0: 0.1,
            p1: 0.1,
            p_plus: 0.3,
            p_minus: 0.0,
        };
        assert_eq!(x_basis_qber(&p).unwrap(), 0.0);
        let p = ClickProbabilities {
            p_plus: 1.0,
            p_minus: 1.0,
            ..p
        };
        assert_eq!(x_basis_qber(&p).unwrap(), 0.5);
        let p = ClickProbabilities {
            p_plus: 0.0,
            p_minus: 0.0,
            ..p
        };
        assert!(matches!(x_basis_qber(&p), Err(Error::Degenerate(_))));
    }

    #[test]
    fn reference_qber() {
        let p = click_probabilities(&SystemModel::reference(36.58)).unwrap();
        let e = x_basis_qber(&p).unwrap();
        assert!(rel(e, 0.00120949004422) < 1e-9);
        // measured 0.124%
        assert!(rel(e, 0.00124) < 0.05);
    }

    #[test]
    fn reference_tally() {
        let n = expected_tally(&SystemModel::reference(36.58)).unwrap();
        assert!(rel(n.n_h_s, 928372622.99) < 1e-9);
        assert!(rel(n.n_v_s, 920661594.27) < 1e-9);
        assert!(rel(n.n_z_d, 160253130.249) < 1e-9);
        assert!(rel(n.n_h_s, 9.29e8) < 0.03);
        assert!(rel(n.n_v_s, 9.23e8) < 0.03);
        assert!(rel(n.n_z_d, 1.61e8) < 0.03);
    }

    #[test]
    fn doubled_mu_tally() {
        let n = expected_tally(&SystemModel::reference(73.16)).unwrap();
        assert!(rel(n.n_h_s, 1076490700.96) < 1e-9);
        assert!(rel(n.n_v_s, 1066839484.16) < 1e-9);
        assert!(rel(n.n_d_s, 2427420140.61) < 1e-9);
        assert!(rel(n.n_a_s, 2109436.63608) < 1e-9);
        assert!(rel(n.n_x_d, 1800030.1307) < 1e-9);
    }

    #[test]
    fn zero_time_zero_counts() {
        let mut model = SystemModel::reference(36.58);
        model.t_s = 0.0;
        let n = expected_tally(&model).unwrap();
        assert_eq!(n.n_z_tol + n.n_x_tol + n.n_h_s + n.n_a_s, 0.0);
    }

    fn model_strategy() -> impl Strategy<Value = SystemModel> {
        (
            0.0..500.0f64,
            0.0..=1.0f64,
            prop::array::uniform4(0.0..=1.0f64),
            0.0..0.5f64,
            0.0..=1.0f64,
            0.0..=1.0f64,
        )
            .prop_map(|(mu, p_z, eta, y_0, m0_z, m_minus_x)| SystemModel {
                mu,
                p_z,
                eta_0: eta[0],
                eta_1: eta[1],
                eta_plus: eta[2],
                eta_minus: eta[3],
                y_0,
                m0_z,
                m_minus_x,
                ..SystemModel::reference(mu)
            })
    }

    proptest! {
        #[test]
        fn exclusive_events_sum_to_at_most_one(model in model_strategy()) {
            let q = basis_event_probabilities(&click_probabilities(&model).unwrap()).unwrap();
            let basis = q.q_z_single + q.q_z_double + q.q_x_single + q.q_x_double;
            prop_assert!(basis <= 1.0 + 1e-12);
            prop_assert!((basis + q.q_cross + q.q_vacuum - 1.0).abs() < 1e-12);
            prop_assert!(q.q_z_single + q.q_z_double <= 1.0 + 1e-12);
        }

        #[test]
        fn clicks_increase_with_mu(model in model_strategy(), bump in 0.01..10.0f64) {
            let lo = click_probabilities(&model).unwrap();
            let hi = click_probabilities(&SystemModel { mu: model.mu + bump, ..model }).unwrap();
            prop_assert!(hi.p0 >= lo.p0 && hi.p1 >= lo.p1);
            prop_assert!(hi.p_plus >= lo.p_plus && hi.p_minus >= lo.p_minus);
            let darker = click_probabilities(&SystemModel { y_0: model.y_0 + 0.1, ..model }).unwrap();
            prop_assert!(darker.p0 >= lo.p0 && darker.p_minus >= lo.p_minus);
        }

        #[test]
        fn strictly_increasing_when_light_reaches_detector(mu in 0.1..100.0f64) {
            let a = click_probabilities(&SystemModel::reference(mu)).unwrap();
            let b = click_probabilities(&SystemModel::reference(mu * 1.01)).unwrap();
            prop_assert!(b.p0 > a.p0 && b.p1 > a.p1 && b.p_plus > a.p_plus && b.p_minus > a.p_minus);
        }

        #[test]
        fn qber_invariant_under_mu_efficiency_rescaling(mu in 1.0..100.0f64, c in 1.0..4.0f64) {
            let base = SystemModel::reference(mu);
            let scaled = SystemModel {
                mu: mu * c,
                eta_0: base.eta_0 / c,
                eta_1: base.eta_1 / c,
                eta_plus: base.eta_plus / c,
                eta_minus: base.eta_minus / c,
                ..base
            };
            let e0 = x_basis_qber(&click_probabilities(&base).unwrap()).unwrap();
            let e1 = x_basis_qber(&click_probabilities(&scaled).unwrap()).unwrap();
            prop_assert!(((e0 - e1) / e0).abs() < 1e-9);
        }

        #[test]
        fn tally_is_linear_in_time_and_rate(mu in 0.0..200.0f64, k in 0.1..10.0f64) {
            let base = SystemModel::reference(mu);
            let a = expected_tally(&base).unwrap();
            let t = expected_tally(&SystemModel { t_s: base.t_s * k, ..base }).unwrap();
            let f = expected_tally(&SystemModel { f_hz: base.f_hz * k, ..base }).unwrap();
            for (x, y) in [(a.n_h_s, t.n_h_s), (a.n_x_tol, t.n_x_tol), (a.n_z_d, f.n_z_d), (a.n_a_s, f.n_a_s)] {
                prop_assert!((x * k - y).abs() <= 1e-9 * y.abs().max(1.0));
            }
        }
    }
}
