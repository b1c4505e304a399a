//! End-to-end runs: analytic evaluation, the photon-number sweep and the
//! simulate → estimate → extract → test chain.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bits::BitBuffer;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::extractor::{extract_blocks, plan_extraction, seed_bits_required, ExtractionPlan};
use crate::model::{
    basis_event_probabilities, click_probabilities, expected_tally, x_basis_qber,
    BasisEventProbabilities, ClickProbabilities, ExpectedTally, SystemModel,
};
use crate::montecarlo::{double_click_assignment, simulate, tally_to_estimation_input, ClickTally};
use crate::security::{analyze, epsilon_total, EstimationInput, RateReport, SecurityParams};
use crate::stattests::{battery_passed, run_battery, TestReport};

/// Generator stream for Toeplitz seeds drawn from the run seed.
const TOEPLITZ_STREAM: u64 = u64::MAX - 1;

/// Analytic predictions for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEvaluation {
    pub click_probabilities: ClickProbabilities,
    pub event_probabilities: BasisEventProbabilities,
    pub expected_tally: ExpectedTally,
    /// `None` when the model produces no X-basis clicks.
    pub estimation_input: Option<EstimationInput>,
    pub rate: RateReport,
}

/// Report for a configuration that certifies nothing.
pub fn zero_rate(sec: &SecurityParams) -> RateReport {
    RateReport {
        theta: 0.0,
        epsilon_theta: 1.0,
        e_bx: 0.0,
        n_z_single: 0,
        mismatch_factor: 0.0,
        extractable_bits: 0.0,
        rate_bps: 0.0,
        epsilon_total: epsilon_total(1.0, (-f64::from(sec.t_e)).exp2()),
    }
}

/// Feeds the expected counts of `model` through the finite-key analysis.
/// Counts are rounded to whole events; the QBER is the analytic one.
pub fn evaluate_model(model: &SystemModel, sec: &SecurityParams) -> Result<ModelEvaluation> {
    model.validate()?;
    sec.validate()?;
    let clicks = click_probabilities(model)?;
    let events = basis_event_probabilities(&clicks)?;
    let tally = expected_tally(model)?;
    let n_x = tally.n_x_tol.round() as u64;

    let estimation_input = match x_basis_qber(&clicks) {
        Ok(e_bx) if n_x > 0 && tally.n_z_tol > 0.0 => Some(EstimationInput {
            n_total: (tally.n_z_tol + tally.n_x_tol).round() as u64,
            n_x,
            p_x: model.p_x(),
            e_bx,
            n_z_single: (tally.n_h_s + tally.n_v_s).round() as u64,
            eta_0: model.eta_0,
            eta_1: model.eta_1,
            duration_s: model.t_s,
        }),
        Ok(_) | Err(Error::Degenerate(_)) => None,
        Err(e) => return Err(e),
    };
    let rate = match &estimation_input {
        Some(input) if model.eta_0 > 0.0 && model.eta_1 > 0.0 && input.e_bx < 0.5 => {
            analyze(input, sec)?
        }
        _ => zero_rate(sec),
    };
    Ok(ModelEvaluation {
        click_probabilities: clicks,
        event_probabilities: events,
        expected_tally: tally,
        estimation_input,
        rate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub mu: f64,
    pub rate_bps: f64,
}

/// Analytic rate on an evenly spaced grid of mean photon numbers.
pub fn sweep(
    model: &SystemModel,
    sec: &SecurityParams,
    mu_min: f64,
    mu_max: f64,
    points: usize,
) -> Result<Vec<SweepPoint>> {
    if !(mu_min >= 0.0 && mu_min < mu_max && mu_max.is_finite()) {
        return Err(Error::Domain(format!(
            "sweep range needs 0 <= mu_min < mu_max, got [{mu_min}, {mu_max}]"
        )));
    }
    if points < 2 {
        return Err(Error::Domain(format!(
            "sweep needs at least 2 points, got {points}"
        )));
    }
    let step = (mu_max - mu_min) / (points - 1) as f64;
    (0..points)
        .map(|i| {
            let mu = if i == points - 1 {
                mu_max
            } else {
                mu_min + step * i as f64
            };
            let eval = evaluate_model(&SystemModel { mu, ..*model }, sec)?;
            Ok(SweepPoint {
                mu,
                rate_bps: eval.rate.rate_bps,
            })
        })
        .collect()
}

/// Everything a pipeline run produces.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub tally: ClickTally,
    pub raw_bits: BitBuffer,
    pub estimation_input: EstimationInput,
    pub rate: RateReport,
    pub plan: ExtractionPlan,
    pub final_bits: BitBuffer,
    pub battery: Vec<TestReport>,
}

impl PipelineOutput {
    pub fn passed(&self) -> bool {
        battery_passed(&self.battery)
    }

    pub fn summary(&self, config: &RunConfig) -> PipelineSummary {
        PipelineSummary {
            config: config.clone(),
            tally: self.tally,
            estimation_input: self.estimation_input,
            rate: self.rate,
            plan: self.plan,
            raw_bits: self.raw_bits.len() as u64,
            final_bits: self.final_bits.len() as u64,
            battery: self.battery.clone(),
            passed: self.passed(),
        }
    }
}

/// Serializable record of a pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub config: RunConfig,
    pub tally: ClickTally,
    pub estimation_input: EstimationInput,
    pub rate: RateReport,
    pub plan: ExtractionPlan,
    pub raw_bits: u64,
    pub final_bits: u64,
    pub battery: Vec<TestReport>,
    pub passed: bool,
}

/// Toeplitz seed bits drawn from the run seed. Reproducible, not secret.
pub fn generated_toeplitz_seed(seed: u64, len: usize) -> BitBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(TOEPLITZ_STREAM);
    let words = (0..len.div_ceil(64)).map(|_| rng.random::<u64>()).collect();
    BitBuffer::from_words(words, len)
}

/// Runs simulate → estimate → extract → test. `toeplitz_seed` overrides the
/// seed file named in the config.
pub fn run_pipeline(
    config: &RunConfig,
    toeplitz_seed: Option<&BitBuffer>,
) -> Result<PipelineOutput> {
    config.validate()?;
    let model = config.model();
    let sec = config.security();

    let (tally, raw) =
        simulate(&model, config.n_pulses, config.seed).map_err(|e| e.in_stage("simulate"))?;
    let raw = if config.double_click_bits {
        double_click_assignment(&raw, &tally, config.seed)
    } else {
        raw
    };

    let (input, rate) = tally_to_estimation_input(&tally, &model)
        .and_then(|input| Ok((input, analyze(&input, &sec)?)))
        .map_err(|e| e.in_stage("estimate"))?;

    let (plan, final_bits) = (|| {
        let plan = plan_extraction(&rate, config.block_n)?;
        let need = seed_bits_required(&plan, raw.bits.len(), config.seed_policy);
        let owned;
        let seed_stream = match (toeplitz_seed, &config.toeplitz_seed_file) {
            (Some(bits), _) => bits,
            (None, Some(path)) => {
                owned = crate::io::read_bitstream(path)?;
                &owned
            }
            (None, None) => {
                owned = generated_toeplitz_seed(config.seed, need);
                &owned
            }
        };
        let out = extract_blocks(&raw.bits, seed_stream, &plan, config.seed_policy)?;
        Ok::<_, Error>((plan, out))
    })()
    .map_err(|e| e.in_stage("extract"))?;

    let battery = run_battery(&final_bits, config.sample_bits, config.alpha)
        .map_err(|e| e.in_stage("test"))?;

    Ok(PipelineOutput {
        tally,
        raw_bits: raw.bits,
        estimation_input: input,
        rate,
        plan,
        final_bits,
        battery,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dark_model_has_zero_rate() {
        let eval =
            evaluate_model(&SystemModel::reference(0.0), &SecurityParams::default()).unwrap();
        assert!(eval.estimation_input.is_none());
        assert_eq!(eval.rate.rate_bps, 0.0);
    }

    #[test]
    fn reference_evaluation() {
        let eval =
            evaluate_model(&SystemModel::reference(36.58), &SecurityParams::default()).unwrap();
        let input = eval.estimation_input.unwrap();
        assert_eq!(input.n_total, 3_939_350_587);
        assert_eq!(input.n_z_single, 1_849_034_217);
        // 40-digit reference for the same chain: theta and rate.
        assert!((eval.rate.theta / 1.24170343636e-5 - 1.0).abs() < 1e-5);
        assert!((eval.rate.rate_bps / 8570196.62264 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn sweep_grid() {
        let model = SystemModel::reference(1.0);
        let sec = SecurityParams::default();
        let rows = sweep(&model, &sec, 1.0, 200.0, 2).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!((rows[0].mu, rows[1].mu), (1.0, 200.0));
        assert!(sweep(&model, &sec, 5.0, 5.0, 10).is_err());
        assert!(sweep(&model, &sec, -1.0, 5.0, 10).is_err());
        assert!(sweep(&model, &sec, 1.0, 5.0, 1).is_err());
    }

    #[test]
    fn sweep_peaks_inside() {
        let model = SystemModel::reference(1.0);
        let sec = SecurityParams::default();
        let rate = |mu| {
            evaluate_model(&SystemModel { mu, ..model }, &sec)
                .unwrap()
                .rate
                .rate_bps
        };
        let peak = rate(36.58);
        assert!(rate(1.0) < peak && rate(200.0) < peak);
    }

    #[test]
    fn zero_efficiency_stops_at_estimation() {
        let config = RunConfig {
            eta_0: 0.0,
            eta_1: 0.0,
            eta_plus: 0.0,
            eta_minus: 0.0,
            n_pulses: 10_000,
            ..RunConfig::default()
        };
        match run_pipeline(&config, None) {
            Err(Error::Stage { stage, source }) => {
                assert_eq!(stage, "estimate");
                assert!(matches!(*source, Error::Degenerate(_)));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn generated_seed_is_repeatable() {
        assert_eq!(
            generated_toeplitz_seed(3, 1000),
            generated_toeplitz_seed(3, 1000)
        );
        assert_ne!(
            generated_toeplitz_seed(3, 1000),
            generated_toeplitz_seed(4, 1000)
        );
        assert_eq!(generated_toeplitz_seed(3, 1000).len(), 1000);
    }
}
