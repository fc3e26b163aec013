//! Top-level run configuration: one TOML file drives every subcommand.
//! Unknown keys are rejected; missing keys fall back to defaults.

use crate::env::EnvConfig;
use crate::nn::NetConfig;
use crate::train::eval::SatisfactionThresholds;
use crate::train::ppo::PpoConfig;
use crate::train::stage1::Stage1Config;
use crate::train::stage2::{default_periods, PeriodSpec};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub episodes: usize,
    pub thresholds: SatisfactionThresholds,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { episodes: 16, thresholds: SatisfactionThresholds::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub column_axis: Vec<usize>,
    pub ball_axis: Vec<usize>,
    pub episodes: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig { column_axis: vec![0, 5, 10], ball_axis: vec![0, 1, 2], episodes: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Reward weights used by `train`; normally the stage-1 winner.
    pub weights: [f64; 4],
    pub env: EnvConfig,
    pub net: NetConfig,
    pub ppo: PpoConfig,
    pub stage1: Stage1Config,
    pub periods: Vec<PeriodSpec>,
    pub eval: EvalConfig,
    pub metrics: MetricsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            weights: [0.25; 4],
            env: EnvConfig::default(),
            net: NetConfig::default(),
            ppo: PpoConfig::default(),
            stage1: Stage1Config::default(),
            periods: default_periods(),
            eval: EvalConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        RunConfig::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.net.validate()?;
        self.ppo.validate()?;
        crate::reward::WeightVector::new(self.weights)?;
        if self.periods.is_empty() {
            return Err(Error::Config("at least one curriculum period is required".into()));
        }
        if self.eval.episodes == 0 || self.metrics.episodes == 0 {
            return Err(Error::Config("evaluation episode counts must be positive".into()));
        }
        Ok(())
    }

    /// Content hash of the canonical TOML form, for checkpoint metadata and
    /// output manifests.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        let mut out = String::with_capacity(64);
        for b in digest {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }
}
