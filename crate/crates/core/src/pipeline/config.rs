use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calib::SolverOptions;
use crate::ego_velocity::RansacConfig;
use crate::error::{Error, Result};
use crate::experiment::ExperimentConfig;
use crate::simulator::{RADAR_A, RADAR_B};

/// Everything between raw scans and a calibration, stored as TOML.
///
/// ```toml
/// radar_a = "a"
/// radar_b = "b"
/// min_speed = 0.05
/// sync_max_gap = 0.2
///
/// [ransac]
/// residual_threshold = 0.025
///
/// [solver]
/// max_iterations = 100
///
/// [experiment]
/// trials = 100
/// sigmas = [0.05, 0.1, 0.2]
/// ```
///
/// Missing keys take their defaults; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub radar_a: String,
    pub radar_b: String,
    /// Pairs where either radar moves slower than this (m/s) are dropped.
    pub min_speed: f64,
    /// Widest radar-b bracket (s) to interpolate across.
    pub sync_max_gap: f64,
    pub ransac: RansacConfig,
    pub solver: SolverOptions,
    pub experiment: ExperimentConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            radar_a: RADAR_A.into(),
            radar_b: RADAR_B.into(),
            min_speed: 0.05,
            sync_max_gap: 0.2,
            ransac: RansacConfig::default(),
            solver: SolverOptions::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_speed >= 0.0 && self.min_speed.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "min_speed must be non-negative, got {}",
                self.min_speed
            )));
        }
        if !(self.sync_max_gap >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sync_max_gap must be non-negative, got {}",
                self.sync_max_gap
            )));
        }
        if self.radar_a == self.radar_b {
            return Err(Error::InvalidArgument("radar_a and radar_b must differ".into()));
        }
        self.ransac.validate()?;
        self.experiment.validate()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Serialization(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e
                .span()
                .map(|s| text[..s.start].lines().count().max(1))
                .unwrap_or(0),
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml_string()?).map_err(|e| Error::io(path, e))
    }
}
