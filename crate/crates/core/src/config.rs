//! Operator configuration, read from a TOML file. Every key has a default.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregators::TransmitSchedule;
use crate::fusion::FusionConfig;
use crate::metrics::MetricConfig;
use crate::stressmap::{StressMatrix, TreeConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub store_path: PathBuf,
    pub listen_addr: String,
    pub fusion: FusionConfig,
    pub schedule: TransmitSchedule,
    /// TOML file with a `matrix` table; the built-in matrix when absent.
    pub stress_matrix: Option<PathBuf>,
    pub stress_tree: TreeConfig,
    pub metrics: MetricConfig,
    /// Fused objects closer than this to a true road user count as found.
    pub match_radius_m: f64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            store_path: PathBuf::from("situfuse.db"),
            listen_addr: "127.0.0.1:7878".into(),
            fusion: FusionConfig::default(),
            schedule: TransmitSchedule::default(),
            stress_matrix: None,
            stress_tree: TreeConfig::default(),
            metrics: MetricConfig::default(),
            match_radius_m: 3.0,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`, or returns the defaults when no file is given.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        match path {
            None => Ok(Config::default()),
            Some(p) => Config::from_toml(&read(p)?),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        let f = &self.fusion;
        let th = &f.thresholds;
        if !(th.max_position_m > 0.0 && th.max_course_deg > 0.0 && th.max_speed_ms >= 0.0) {
            return bad("fusion thresholds must be positive");
        }
        if !(f.radius_m > 0.0) || !(f.max_lateral_m >= 0.0) {
            return bad("fusion radius must be positive");
        }
        if !f.cluster.is_valid() {
            return bad("course cluster widths must satisfy 1 <= min <= max <= 360");
        }
        let m = &self.metrics;
        if !(m.tti_speed_floor > 0.0 && m.ru_closing_floor > 0.0) {
            return bad("metric floors must be positive");
        }
        if self.stress_tree.capacity == 0 {
            return bad("stress tree capacity must be positive");
        }
        if !(self.match_radius_m > 0.0) {
            return bad("match_radius_m must be positive");
        }
        if self.listen_addr.is_empty() {
            return bad("listen_addr must not be empty");
        }
        Ok(())
    }

    pub fn stress_matrix(&self) -> Result<StressMatrix, ConfigError> {
        match &self.stress_matrix {
            None => Ok(StressMatrix::default()),
            Some(p) => StressMatrix::from_toml(&read(p)?).map_err(|e| ConfigError::Invalid(e.to_string())),
        }
    }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}
