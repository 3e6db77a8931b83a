//! Resolved run configuration: defaults, then the config file, then flags.

use patchwise_core::analysis::EntropyConfig;
use patchwise_core::data::{CompositeGenConfig, IndustrialGenConfig};
use patchwise_core::training::TrainConfig;
use patchwise_core::{kv, Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateConfig {
    pub count: usize,
    pub industrial_fraction: f64,
    pub composite: CompositeGenConfig,
    pub industrial: IndustrialGenConfig,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            count: 100,
            industrial_fraction: 0.2,
            composite: CompositeGenConfig::default(),
            industrial: IndustrialGenConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub horizon: usize,
    /// `None` derives the season from each series' frequency tag.
    pub m_seas: Option<usize>,
    pub windows: usize,
    pub stride: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            horizon: 48,
            m_seas: None,
            windows: 1,
            stride: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeConfig {
    pub horizon: usize,
    pub batch_size: usize,
    pub m_seas: Option<usize>,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self {
            horizon: 48,
            batch_size: 8,
            m_seas: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: usize,
    pub generate: GenerateConfig,
    pub profile: EntropyConfig,
    pub train: TrainConfig,
    pub forecast_horizon: usize,
    pub eval: EvalConfig,
    pub analyze: AnalyzeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: 1,
            generate: GenerateConfig::default(),
            profile: EntropyConfig::default(),
            train: TrainConfig::default(),
            forecast_horizon: 48,
            eval: EvalConfig::default(),
            analyze: AnalyzeConfig::default(),
        }
    }
}

impl RunConfig {
    /// Any failure here is a usage error, whatever its underlying kind.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(p) = path else {
            return Ok(Self::default());
        };
        std::fs::read_to_string(p)
            .map_err(Error::from)
            .and_then(|text| kv::apply_kv(&Self::default(), &text, &p.display().to_string()))
            .map_err(|e| match e {
                Error::Config(_) => e,
                other => Error::Config(other.to_string()),
            })
    }

    pub fn snapshot(&self) -> Result<String> {
        kv::to_kv(self)
    }
}
