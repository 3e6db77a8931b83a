//! Training configuration and its plain-text `key = value` form.

use crate::data::CorpusSampler;
use crate::error::{Error, Result};
use crate::kv;
use crate::model::ModelConfig;
use crate::training::loss::LossConfig;
use crate::training::optim::OptimConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub optim: OptimConfig,
    pub loss: LossConfig,
    pub sampler: CorpusSampler,
    /// Write a log line every `log_every` steps (0 disables).
    pub log_every: u64,
    /// Periodic checkpoint cadence in steps (0 keeps only the final one).
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            optim: OptimConfig::default(),
            loss: LossConfig::default(),
            sampler: CorpusSampler::default(),
            log_every: 1,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.optim.validate()?;
        self.loss.validate()?;
        self.sampler.validate()?;
        if self.loss.levels != self.model.quantile_levels {
            return Err(Error::config("loss quantile levels differ from the model's"));
        }
        Ok(())
    }

    /// Overlay `key = value` lines on `self`.
    pub fn apply_kv(&self, text: &str, source: &str) -> Result<Self> {
        kv::apply_kv(self, text, source)
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        Self::default().apply_kv(text, "<config>")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::default().apply_kv(&text, &path.display().to_string())
    }

    /// Every leaf as `key = value`; parses back to `self`.
    pub fn to_kv(&self) -> Result<String> {
        kv::to_kv(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlay_and_round_trip() {
        let cfg = TrainConfig::from_kv(
            "# toy run\noptim.base_lr = 0.002\nmodel.patch.patch_sizes = [4, 8]\nmodel.iarope.space = linear\n",
        )
        .unwrap();
        assert_eq!(cfg.optim.base_lr, 0.002);
        assert_eq!(cfg.model.patch.patch_sizes, vec![4, 8]);
        assert_eq!(cfg.model.iarope.space, crate::iarope::ModulationSpace::Linear);
        let back = TrainConfig::from_kv(&cfg.to_kv().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_key_reports_line() {
        match TrainConfig::from_kv("optim.base_lr = 1\noptim.nope = 2\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(TrainConfig::from_kv("optim.base_lr = fast").is_err());
    }
}
