//! Flat TOML scenario configuration.
//!
//! Every key is optional. Missing keys take the defaults of the static or
//! dynamic experiment; command-line overrides are applied on top.

use std::f64::consts::FRAC_1_SQRT_2;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array_model::{ArrayGeometry, DirectionParams, PilotConfig};
use crate::error::{Error, Result};
use crate::offset_search::REFERENCE_OFFSETS;
use crate::sim_harness::{DynamicScenario, StaticScenario};
use crate::tracker::StepSchedule;

pub const STATIC_SLOTS: u64 = 500;
pub const DYNAMIC_SLOTS: u64 = 200;
pub const DEFAULT_TRIALS: u64 = 1000;
pub const DYNAMIC_STEP: f64 = 0.7;
pub const DEFAULT_K_DB: f64 = 15.0;
pub const DEFAULT_DELTA_STD: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Diminishing,
    Constant,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub m: Option<usize>,
    pub n: Option<usize>,
    /// Element spacings in wavelengths.
    pub d1: Option<f64>,
    pub d2: Option<f64>,
    pub snr_db: Option<f64>,
    pub beta_re: Option<f64>,
    pub beta_im: Option<f64>,
    pub step: Option<StepKind>,
    pub epsilon: Option<f64>,
    pub k0: Option<f64>,
    pub step_value: Option<f64>,
    pub slots: Option<u64>,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    pub codebook_m0: Option<usize>,
    pub codebook_n0: Option<usize>,
    pub offsets: Option<[[f64; 2]; 3]>,
    pub converged_only: Option<bool>,
    pub delta_std: Option<f64>,
    /// `inf` disables the diffuse component.
    pub rician_k_db: Option<f64>,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.message().to_string(),
        })
    }

    fn build(&self, slots: u64, step: StepKind) -> Result<StaticScenario> {
        let m = self.m.unwrap_or(8);
        let n = self.n.unwrap_or(8);
        let cfg = |e: Error| Error::Config(e.to_string());
        let geom = ArrayGeometry::new(m, n, self.d1.unwrap_or(0.5), self.d2.unwrap_or(0.5)).map_err(cfg)?;
        let pilot = PilotConfig::from_snr_db(self.snr_db.unwrap_or(0.0)).map_err(cfg)?;
        let schedule = match self.step.unwrap_or(step) {
            StepKind::Diminishing => StepSchedule::Diminishing {
                epsilon: self.epsilon.unwrap_or(1.0),
                k0: self.k0.unwrap_or(0.0),
            },
            StepKind::Constant => StepSchedule::Constant {
                value: self.step_value.unwrap_or(DYNAMIC_STEP),
            },
        };
        let offsets = match self.offsets {
            Some(o) => o.map(|[a, b]| DirectionParams::new(a, b)),
            None => REFERENCE_OFFSETS,
        };
        let scenario = StaticScenario {
            geom,
            pilot,
            beta: Complex64::new(
                self.beta_re.unwrap_or(FRAC_1_SQRT_2),
                self.beta_im.unwrap_or(FRAC_1_SQRT_2),
            ),
            schedule,
            offsets,
            codebook_m0: self.codebook_m0.unwrap_or(2 * m),
            codebook_n0: self.codebook_n0.unwrap_or(2 * n),
            slots: self.slots.unwrap_or(slots),
            trials: self.trials.unwrap_or(DEFAULT_TRIALS),
            seed: self.seed.unwrap_or(0),
            converged_only: self.converged_only.unwrap_or(false),
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// Static experiment: diminishing `1/k` steps over 500 slots by default.
    pub fn to_static(&self) -> Result<StaticScenario> {
        if self.delta_std.is_some() || self.rician_k_db.is_some() {
            return Err(Error::Config(
                "delta_std and rician_k_db only apply to dynamic scenarios".into(),
            ));
        }
        self.build(STATIC_SLOTS, StepKind::Diminishing)
    }

    /// Dynamic experiment: constant 0.7 steps over 200 slots, 15 dB K-factor by default.
    pub fn to_dynamic(&self) -> Result<DynamicScenario> {
        let k_db = self.rician_k_db.unwrap_or(DEFAULT_K_DB);
        let scenario = DynamicScenario {
            base: self.build(DYNAMIC_SLOTS, StepKind::Constant)?,
            delta_std: self.delta_std.unwrap_or(DEFAULT_DELTA_STD),
            rician_k_db: (k_db != f64::INFINITY).then_some(k_db),
        };
        scenario.validate()?;
        Ok(scenario)
    }
}
