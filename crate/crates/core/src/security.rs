//! Finite-key estimation of the extractable randomness.
//!
//! The X basis monitors the untrusted source. Its observed bit error rate
//! `e_bX` bounds the Z-basis phase error rate up to a statistical deviation
//! `theta`, which holds except with probability
//!
//! ```text
//! eps_theta <= 2^(-N xi(theta)) / sqrt(p_X (1 - p_X) e_bX (1 - e_bX) N)
//! xi(theta)  = H(e_bX + theta - p_X theta) - p_X H(e_bX) - (1 - p_X) H(e_bX + theta)
//! ```
//!
//! Privacy amplification then removes `N_Z^s H(e_bX + theta) + t_e` bits from
//! the Z-basis single clicks, with a further penalty for detector-efficiency
//! mismatch and for non-ideal basis overlap.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2};

use serde::{Deserialize, Serialize};

use crate::error::{check_probability, Error, Result};

/// Parameters of the privacy-amplification step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecurityParams {
    /// Security exponent of the extraction, failure probability `2^-t_e`.
    pub t_e: u32,
    /// Failure probability allowed for the phase-error bound.
    pub epsilon_theta_target: f64,
    /// `max |<X|Z>|` over the two measurement bases.
    pub overlap: f64,
}

impl SecurityParams {
    /// Ideal complementary bases with the phase-error target set to `2^-t_e`.
    pub fn new(t_e: u32) -> Self {
        SecurityParams {
            t_e,
            epsilon_theta_target: (-f64::from(t_e)).exp2(),
            overlap: FRAC_1_SQRT_2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_e < 1 {
            return Err(Error::invalid("t_e", f64::from(self.t_e), "must be >= 1"));
        }
        let target = self.epsilon_theta_target;
        if !(target > 0.0 && target < 1.0) {
            return Err(Error::invalid(
                "epsilon_theta_target",
                target,
                "must lie in (0, 1)",
            ));
        }
        validate_overlap(self.overlap)
    }

    fn extraction_failure(&self) -> f64 {
        (-f64::from(self.t_e)).exp2()
    }
}

impl Default for SecurityParams {
    fn default() -> Self {
        SecurityParams::new(100)
    }
}

fn validate_overlap(overlap: f64) -> Result<()> {
    // Complementary bases attain the lower end exactly.
    if (FRAC_1_SQRT_2 * (1.0 - 4.0 * f64::EPSILON)..=1.0).contains(&overlap) {
        Ok(())
    } else {
        Err(Error::invalid(
            "overlap",
            overlap,
            "must lie in [1/sqrt(2), 1]",
        ))
    }
}

/// Statistics that feed parameter estimation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationInput {
    /// Total number of detection events `N` used in the sampling bound.
    pub n_total: u64,
    /// Number of X-basis detection events.
    pub n_x: u64,
    /// Probability of choosing the X basis.
    pub p_x: f64,
    /// Observed X-basis bit error rate.
    pub e_bx: f64,
    /// Number of Z-basis single clicks `N_Z^s`.
    pub n_z_single: u64,
    pub eta_0: f64,
    pub eta_1: f64,
    /// Accumulation time in seconds.
    pub duration_s: f64,
}

impl EstimationInput {
    pub fn validate(&self) -> Result<()> {
        check_probability("p_x", self.p_x)?;
        check_probability("eta_0", self.eta_0)?;
        check_probability("eta_1", self.eta_1)?;
        if !(self.e_bx >= 0.0 && self.e_bx < 0.5) {
            return Err(Error::invalid("e_bx", self.e_bx, "must lie in [0, 1/2)"));
        }
        if self.n_z_single > self.n_total {
            return Err(Error::invalid(
                "n_z_single",
                self.n_z_single as f64,
                "exceeds n_total",
            ));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::invalid(
                "duration_s",
                self.duration_s,
                "must be finite and > 0",
            ));
        }
        Ok(())
    }

    /// The QBER fed into the sampling bound. A zero observed rate is replaced
    /// by `1 / (2 N_X)`, the rate of half an error among the X events.
    pub fn effective_qber(&self) -> Result<f64> {
        if self.e_bx > 0.0 {
            return Ok(self.e_bx);
        }
        if self.n_x == 0 {
            return Err(Error::Degenerate(
                "zero QBER with no X-basis events cannot be bounded".into(),
            ));
        }
        Ok(0.5 / self.n_x as f64)
    }

    /// `2 min(eta_0, eta_1) / (eta_0 + eta_1)`.
    pub fn mismatch_factor(&self) -> f64 {
        let sum = self.eta_0 + self.eta_1;
        if sum == 0.0 {
            0.0
        } else {
            2.0 * self.eta_0.min(self.eta_1) / sum
        }
    }
}

/// Outcome of the finite-key analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub theta: f64,
    pub epsilon_theta: f64,
    /// QBER used in the bound (after zero-clamping).
    pub e_bx: f64,
    pub n_z_single: u64,
    pub mismatch_factor: f64,
    pub extractable_bits: f64,
    pub rate_bps: f64,
    /// Trace-distance failure probability of the whole protocol.
    pub epsilon_total: f64,
}

/// Shannon entropy of a Bernoulli(x) variable, in bits.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!(
            "binary entropy needs x in [0, 1], got {x}"
        )));
    }
    Ok(entropy_unchecked(x))
}

fn entropy_unchecked(x: f64) -> f64 {
    if x == 0.0 || x == 1.0 {
        return 0.0;
    }
    -(x * x.ln() + (1.0 - x) * (-x).ln_1p()) / LN_2
}

fn xi(theta: f64, e: f64, p_x: f64) -> f64 {
    entropy_unchecked(e + theta - p_x * theta)
        - p_x * entropy_unchecked(e)
        - (1.0 - p_x) * entropy_unchecked(e + theta)
}

/// `log2` of the unclamped bound.
fn log2_epsilon_theta(theta: f64, n: f64, p_x: f64, e: f64) -> f64 {
    let denom = p_x * (1.0 - p_x) * e * (1.0 - e) * n;
    -0.5 * denom.log2() - n * xi(theta, e, p_x)
}

struct Bound {
    n: f64,
    p_x: f64,
    e: f64,
}

impl Bound {
    fn new(input: &EstimationInput, e: f64) -> Result<Self> {
        if e <= 0.0 || e >= 1.0 {
            return Err(Error::Domain(format!(
                "the sampling bound is singular at e_bx = {e}"
            )));
        }
        if input.p_x <= 0.0 || input.p_x >= 1.0 {
            return Err(Error::Domain(format!(
                "the sampling bound needs 0 < p_x < 1, got {}",
                input.p_x
            )));
        }
        if input.n_total == 0 {
            return Err(Error::Degenerate("no detection events".into()));
        }
        Ok(Bound {
            n: input.n_total as f64,
            p_x: input.p_x,
            e,
        })
    }

    fn log2_eps(&self, theta: f64) -> f64 {
        log2_epsilon_theta(theta, self.n, self.p_x, self.e).min(0.0)
    }

    fn check_theta(&self, theta: f64) -> Result<()> {
        if !(theta >= 0.0 && self.e + theta < 1.0) {
            return Err(Error::Domain(format!(
                "theta = {theta} must satisfy theta >= 0 and e_bx + theta < 1"
            )));
        }
        Ok(())
    }
}

/// Probability that the Z-basis phase error rate exceeds `e_bX + theta`.
///
/// Uses `input.e_bx` as is; a zero QBER is a domain error here (see
/// [`EstimationInput::effective_qber`]).
pub fn epsilon_theta(theta: f64, input: &EstimationInput) -> Result<f64> {
    let bound = Bound::new(input, input.e_bx)?;
    bound.check_theta(theta)?;
    Ok(bound.log2_eps(theta).exp2())
}

/// Smallest `theta` whose failure probability is at most `target`, to a
/// relative tolerance of 1e-6.
///
/// Returns 0 when the bound is already met without any deviation.
pub fn solve_theta(input: &EstimationInput, target: f64) -> Result<f64> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::invalid("target", target, "must lie in (0, 1]"));
    }
    let bound = Bound::new(input, input.e_bx)?;
    let log_target = target.log2();
    if bound.log2_eps(0.0) <= log_target {
        return Ok(0.0);
    }
    let span = 1.0 - bound.e;
    let mut hi = f64::from_bits(span.to_bits() - 1);
    if bound.log2_eps(hi) > log_target {
        return Err(Error::NoSolution(format!(
            "even theta = {hi} leaves eps_theta above {target}"
        )));
    }
    let mut lo = 0.0;
    // xi is strictly increasing in theta, so eps_theta is monotone.
    while hi - lo > 1e-6 * hi {
        let mid = 0.5 * (lo + hi);
        if bound.log2_eps(mid) <= log_target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Raw-to-final length `N_z - N_z H(e_bX + theta) - t_e`, with `N_z` the
/// Z-basis single clicks; clamped at zero.
pub fn extraction_length(input: &EstimationInput, sec: &SecurityParams, theta: f64) -> f64 {
    let phase = input.e_bx + theta;
    if !(0.0..0.5).contains(&phase) {
        return 0.0;
    }
    let n_z = input.n_z_single as f64;
    (n_z - n_z * entropy_unchecked(phase) - f64::from(sec.t_e)).max(0.0)
}

/// Trace-distance failure probability from the two failure terms.
pub fn epsilon_total(epsilon_theta: f64, extraction_failure: f64) -> f64 {
    let x = (epsilon_theta + extraction_failure).clamp(0.0, 1.0);
    (x * (2.0 - x)).sqrt()
}

/// Extractable bits with detector-mismatch and basis-overlap corrections.
pub fn final_rate(input: &EstimationInput, sec: &SecurityParams, theta: f64) -> Result<RateReport> {
    validate_overlap(sec.overlap)?;
    input.validate()?;
    if input.eta_0 <= 0.0 || input.eta_1 <= 0.0 {
        return Err(Error::Degenerate(
            "Z-basis detector efficiencies must be positive".into(),
        ));
    }
    let e = input.effective_qber()?;
    let bound = Bound::new(input, e)?;
    bound.check_theta(theta)?;

    let n_s = input.n_z_single as f64;
    let phase = e + theta;
    let phase_cost = if phase < 0.5 {
        entropy_unchecked(phase)
    } else {
        1.0
    };
    let incompatibility = -2.0 * sec.overlap.log2();
    let mismatch = input.mismatch_factor();
    let bracket = incompatibility * n_s - n_s * phase_cost - f64::from(sec.t_e);
    let extractable_bits = (mismatch * bracket).max(0.0);
    let eps_theta = bound.log2_eps(theta).exp2();

    Ok(RateReport {
        theta,
        epsilon_theta: eps_theta,
        e_bx: e,
        n_z_single: input.n_z_single,
        mismatch_factor: mismatch,
        extractable_bits,
        rate_bps: extractable_bits / input.duration_s,
        epsilon_total: epsilon_total(eps_theta, sec.extraction_failure()),
    })
}

/// Solves for `theta` at the configured target and evaluates the final rate.
pub fn analyze(input: &EstimationInput, sec: &SecurityParams) -> Result<RateReport> {
    sec.validate()?;
    input.validate()?;
    let clamped = EstimationInput {
        e_bx: input.effective_qber()?,
        ..*input
    };
    let theta = solve_theta(&clamped, sec.epsilon_theta_target)?;
    final_rate(input, sec, theta)
}

/// The basis overlap at which [`final_rate`] would yield `rate_bps`.
pub fn calibrated_overlap(
    input: &EstimationInput,
    sec: &SecurityParams,
    theta: f64,
    rate_bps: f64,
) -> Result<f64> {
    let e = input.effective_qber()?;
    let n_s = input.n_z_single as f64;
    let mismatch = input.mismatch_factor();
    if n_s == 0.0 || mismatch == 0.0 {
        return Err(Error::Degenerate(
            "no single clicks to calibrate against".into(),
        ));
    }
    let bracket = rate_bps * input.duration_s / mismatch;
    let incompatibility =
        (bracket + n_s * binary_entropy((e + theta).min(1.0))? + f64::from(sec.t_e)) / n_s;
    let overlap = (-0.5 * incompatibility).exp2();
    validate_overlap(overlap)?;
    Ok(overlap)
}
