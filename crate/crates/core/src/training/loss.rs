//! Time-weighted quantile (pinball) loss.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// The nine training / evaluation quantile levels `0.1, 0.2, …, 0.9`.
pub const QUANTILE_LEVELS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// Index of the median in [`QUANTILE_LEVELS`].
pub const MEDIAN_INDEX: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub levels: Vec<f64>,
    /// Lower clip for the horizon weights. The literal weighting gives the
    /// last horizon step weight 0.
    pub weight_floor: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            levels: QUANTILE_LEVELS.to_vec(),
            weight_floor: 0.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::config("no quantile levels"));
        }
        let ok = self.levels.iter().all(|&a| a > 0.0 && a < 1.0)
            && self.levels.windows(2).all(|w| w[0] < w[1]);
        if !ok {
            return Err(Error::config("quantile levels must be strictly increasing in (0, 1)"));
        }
        if !(self.weight_floor >= 0.0) {
            return Err(Error::config("weight_floor must be non-negative"));
        }
        Ok(())
    }
}

/// Pinball loss `(α − 1{y<q})(y − q)`; never negative.
pub fn pinball(y: f64, q: f64, alpha: f64) -> f64 {
    let ind = if y < q { 1.0 } else { 0.0 };
    (alpha - ind) * (y - q)
}

/// `ω(t) = (ln H − ln t) / H` for `t = 1..=H`, clipped below at `floor`.
pub fn horizon_weights(horizon: usize, floor: f64) -> Vec<f64> {
    let h = horizon as f64;
    (1..=horizon)
        .map(|t| ((h.ln() - (t as f64).ln()) / h).max(floor))
        .collect()
}

/// One target window with its observation mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

/// `(1/B) Σ_i Σ_t (1/K) Σ_k ω(t) · pinball(y_it, q_it(α_k))`.
///
/// `forecasts[i]` holds `H × K` row-major quantiles. Masked target points are
/// excluded.
pub fn batch_loss(targets: &[Target], forecasts: &[Vec<f64>], cfg: &LossConfig) -> Result<f64> {
    if targets.len() != forecasts.len() {
        return Err(Error::Shape(format!(
            "batch of {} targets vs {} forecasts",
            targets.len(),
            forecasts.len()
        )));
    }
    if targets.is_empty() {
        return Err(Error::Shape("empty batch".into()));
    }
    let k = cfg.levels.len();
    let mut total = 0.0;
    for (target, fc) in targets.iter().zip(forecasts) {
        let h = target.values.len();
        if target.mask.len() != h || fc.len() != h * k {
            return Err(Error::Shape(format!(
                "target length {h} / mask {} / forecast {} (expected {})",
                target.mask.len(),
                fc.len(),
                h * k
            )));
        }
        let w = horizon_weights(h, cfg.weight_floor);
        for t in 0..h {
            if !target.mask[t] {
                continue;
            }
            let y = target.values[t];
            let s: f64 = cfg
                .levels
                .iter()
                .enumerate()
                .map(|(j, &a)| pinball(y, fc[t * k + j], a))
                .sum();
            total += w[t] * s / k as f64;
        }
    }
    Ok(total / targets.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pinball_examples() {
        assert_eq!(pinball(0.7, 0.7, 0.3), 0.0);
        assert!((pinball(1.0, 0.0, 0.5) - 0.5).abs() < 1e-15);
        assert!((pinball(0.0, 1.0, 0.1) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn weights_examples() {
        for h in 1..20 {
            let w = horizon_weights(h, 0.0);
            assert_eq!(w[h - 1], 0.0);
            assert!(w.windows(2).all(|p| p[0] >= p[1]));
        }
        let w = horizon_weights(2, 0.0);
        assert!((w[0] - 2f64.ln() / 2.0).abs() < 1e-15);
        assert!((w[0] - 0.3466).abs() < 1e-4);
        let floored = horizon_weights(2, 0.05);
        assert_eq!(floored[1], 0.05);
    }

    #[test]
    fn perfect_forecast_has_zero_loss() {
        let t = Target {
            values: vec![1.0, -2.0, 3.0],
            mask: vec![true; 3],
        };
        let fc: Vec<f64> = t.values.iter().flat_map(|&v| [v; 9]).collect();
        assert_eq!(batch_loss(&[t], &[fc], &LossConfig::default()).unwrap(), 0.0);
    }

    #[test]
    fn shape_mismatch_errors() {
        let t = Target {
            values: vec![1.0, 2.0],
            mask: vec![true; 2],
        };
        assert!(batch_loss(&[t], &[vec![0.0; 17]], &LossConfig::default()).is_err());
    }

    #[test]
    fn masked_points_excluded() {
        let t = Target {
            values: vec![5.0, 0.0, 0.0],
            mask: vec![false, true, true],
        };
        let fc = vec![0.0; 27];
        assert_eq!(batch_loss(&[t], &[fc], &LossConfig::default()).unwrap(), 0.0);
    }

    #[test]
    fn invalid_levels_rejected() {
        let cfg = LossConfig {
            levels: vec![0.5, 0.2],
            weight_floor: 0.0,
        };
        assert!(cfg.validate().is_err());
    }

    proptest! {
        #[test]
        fn pinball_non_negative(y in -100.0f64..100.0, q in -100.0f64..100.0, a in 0.01f64..0.99) {
            prop_assert!(pinball(y, q, a) >= 0.0);
        }

        #[test]
        fn batch_loss_non_negative(vals in proptest::collection::vec(-5.0f64..5.0, 4), q in proptest::collection::vec(-5.0f64..5.0, 36)) {
            let t = Target { values: vals, mask: vec![true; 4] };
            prop_assert!(batch_loss(&[t], &[q], &LossConfig::default()).unwrap() >= 0.0);
        }
    }
}
