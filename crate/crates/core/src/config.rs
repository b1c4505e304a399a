//! Run configuration.
//!
//! A config is a UTF-8 JSON object whose keys mirror the physical symbols
//! (`mu`, `f_hz`, `t_s`, `p_z`, `eta_0`, ...). Missing keys take the values
//! of the reference receiver at `mu = 36.58`; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::extractor::{SeedPolicy, DEFAULT_BLOCK_BITS};
use crate::model::SystemModel;
use crate::security::SecurityParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub mu: f64,
    pub f_hz: f64,
    pub t_s: f64,
    pub p_z: f64,
    pub eta_0: f64,
    pub eta_1: f64,
    pub eta_plus: f64,
    pub eta_minus: f64,
    pub y_0: f64,
    pub m0_z: f64,
    pub m_minus_x: f64,
    pub t_e: u32,
    /// Defaults to `2^-t_e` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon_theta_target: Option<f64>,
    pub overlap: f64,
    pub n_pulses: u64,
    pub seed: u64,
    pub block_n: usize,
    pub seed_policy: SeedPolicy,
    /// Append a random bit for every Z-basis double click.
    pub double_click_bits: bool,
    /// Raw bitstream holding Toeplitz seed bits. When absent the pipeline
    /// draws them from a generator keyed by `seed` (not for production use).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub toeplitz_seed_file: Option<PathBuf>,
    pub sample_bits: usize,
    pub alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let model = SystemModel::reference(36.58);
        let sec = SecurityParams::default();
        RunConfig {
            mu: model.mu,
            f_hz: model.f_hz,
            t_s: model.t_s,
            p_z: model.p_z,
            eta_0: model.eta_0,
            eta_1: model.eta_1,
            eta_plus: model.eta_plus,
            eta_minus: model.eta_minus,
            y_0: model.y_0,
            m0_z: model.m0_z,
            m_minus_x: model.m_minus_x,
            t_e: sec.t_e,
            epsilon_theta_target: None,
            overlap: sec.overlap,
            n_pulses: 100_000_000,
            seed: 1,
            block_n: DEFAULT_BLOCK_BITS,
            seed_policy: SeedPolicy::Reuse,
            double_click_bits: false,
            toeplitz_seed_file: None,
            sample_bits: 100_000,
            alpha: 0.01,
            output_dir: None,
        }
    }
}

impl RunConfig {
    /// Parses and validates a JSON config. Syntax errors carry line and
    /// column.
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| {
            Error::Config(format!("line {}, column {}: {}", e.line(), e.column(), e))
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::io::read_text(path)?;
        RunConfig::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {}", path.display(), msg)),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn model(&self) -> SystemModel {
        SystemModel {
            mu: self.mu,
            f_hz: self.f_hz,
            t_s: self.t_s,
            p_z: self.p_z,
            eta_0: self.eta_0,
            eta_1: self.eta_1,
            eta_plus: self.eta_plus,
            eta_minus: self.eta_minus,
            y_0: self.y_0,
            m0_z: self.m0_z,
            m_minus_x: self.m_minus_x,
        }
    }

    pub fn security(&self) -> SecurityParams {
        let base = SecurityParams::new(self.t_e);
        SecurityParams {
            epsilon_theta_target: self
                .epsilon_theta_target
                .unwrap_or(base.epsilon_theta_target),
            overlap: self.overlap,
            ..base
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model().validate()?;
        self.security().validate()?;
        if self.n_pulses == 0 {
            return Err(Error::invalid("n_pulses", 0.0, "must be >= 1"));
        }
        if self.block_n == 0 {
            return Err(Error::invalid("block_n", 0.0, "must be >= 1"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 0.1) {
            return Err(Error::invalid("alpha", self.alpha, "must lie in (0, 0.1]"));
        }
        Ok(())
    }

    /// Overrides one field from its command-line spelling. The value is read
    /// as JSON first and as a bare string otherwise, so `--mu 12` and
    /// `--seed_policy fresh-per-block` both work.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut object = serde_json::to_value(&*self).expect("config serializes");
        let parsed = serde_json::from_str::<Value>(value)
            .unwrap_or_else(|_| Value::String(value.to_string()));
        object
            .as_object_mut()
            .expect("config is an object")
            .insert(key.to_string(), parsed);
        let updated: RunConfig = serde_json::from_value(object)
            .map_err(|e| Error::Config(format!("--{key} {value}: {e}")))?;
        updated.validate()?;
        *self = updated;
        Ok(())
    }

    /// Every key accepted in a config file.
    pub const KEYS: [&'static str; 23] = [
        "mu",
        "f_hz",
        "t_s",
        "p_z",
        "eta_0",
        "eta_1",
        "eta_plus",
        "eta_minus",
        "y_0",
        "m0_z",
        "m_minus_x",
        "t_e",
        "epsilon_theta_target",
        "overlap",
        "n_pulses",
        "seed",
        "block_n",
        "seed_policy",
        "double_click_bits",
        "toeplitz_seed_file",
        "sample_bits",
        "alpha",
        "output_dir",
    ];
}
