use crate::error::{Error, Result};
use crate::iarope::IaropeConfig;
use crate::mosdp::PatchConfig;
use crate::training::loss::QUANTILE_LEVELS;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    /// Hidden width of each patch-size expert.
    pub d_expert: usize,
    pub patch: PatchConfig,
    pub iarope: IaropeConfig,
    /// Forecast tokens `J` per decoder pass.
    pub forecast_tokens: usize,
    /// Steps `H_s` emitted per forecast token.
    pub token_span: usize,
    /// Context window; longer histories keep the most recent steps.
    pub context: usize,
    pub quantile_levels: Vec<f64>,
    /// Floor for the per-instance standard deviation.
    pub std_floor: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder_layers: 2,
            decoder_layers: 2,
            heads: 4,
            d_model: 64,
            d_ff: 256,
            d_expert: 128,
            patch: PatchConfig {
                patch_sizes: vec![8, 16, 32],
                ..PatchConfig::default()
            },
            iarope: IaropeConfig::default(),
            forecast_tokens: 2,
            token_span: 24,
            context: 256,
            quantile_levels: QUANTILE_LEVELS.to_vec(),
            std_floor: 1e-6,
        }
    }
}

impl ModelConfig {
    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    /// Steps produced by one decoder pass, `J · H_s`.
    pub fn pass_len(&self) -> usize {
        self.forecast_tokens * self.token_span
    }

    pub fn validate(&self) -> Result<()> {
        self.patch.validate()?;
        if self.heads == 0 || self.d_model == 0 || !self.d_model.is_multiple_of(self.heads) {
            return Err(Error::config(format!(
                "d_model {} must be a positive multiple of heads {}",
                self.d_model, self.heads
            )));
        }
        if !self.head_dim().is_multiple_of(2) {
            return Err(Error::config("head dim must be even for rotary embeddings"));
        }
        if self.encoder_layers == 0 || self.decoder_layers == 0 {
            return Err(Error::config("need at least one encoder and one decoder layer"));
        }
        if self.d_ff == 0 || self.d_expert == 0 {
            return Err(Error::config("feed-forward widths must be positive"));
        }
        if self.forecast_tokens == 0 || self.token_span == 0 {
            return Err(Error::config("forecast_tokens and token_span must be at least 1"));
        }
        if self.context == 0 {
            return Err(Error::config("context must be positive"));
        }
        if self.quantile_levels.is_empty()
            || !self.quantile_levels.iter().all(|&a| a > 0.0 && a < 1.0)
            || !self.quantile_levels.windows(2).all(|w| w[0] < w[1])
        {
            return Err(Error::config("quantile levels must be strictly increasing in (0, 1)"));
        }
        if !(self.iarope.base > 1.0) {
            return Err(Error::config("rope base must exceed 1"));
        }
        if !(self.std_floor > 0.0) {
            return Err(Error::config("std_floor must be positive"));
        }
        Ok(())
    }

    /// Index of the median level, or the level nearest 0.5.
    pub fn median_index(&self) -> usize {
        (0..self.quantile_levels.len())
            .min_by(|&a, &b| {
                (self.quantile_levels[a] - 0.5)
                    .abs()
                    .total_cmp(&(self.quantile_levels[b] - 0.5).abs())
            })
            .unwrap_or(0)
    }
}
