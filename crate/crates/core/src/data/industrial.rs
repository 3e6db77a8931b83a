//! Idealized machine-cycle signals: a flat baseline with trapezoidal events at
//! exact multiples of the period.

use crate::data::series::TimeSeries;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndustrialPattern {
    /// Events subtracted from the baseline.
    InvertedU,
    /// Events added to the baseline.
    Spikes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndustrialGenConfig {
    pub length: usize,
    pub baseline: (f64, f64),
    pub period: (usize, usize),
    pub amplitude: (f64, f64),
    pub width: (usize, usize),
    /// Probability of a noise-free draw.
    pub noise_free_prob: f64,
    pub noise_sigma: (f64, f64),
    pub force_pattern: Option<IndustrialPattern>,
    pub force_baseline: Option<f64>,
    pub force_noise_free: bool,
}

impl Default for IndustrialGenConfig {
    fn default() -> Self {
        Self {
            length: 4096,
            baseline: (0.0, 1.0),
            period: (64, 512),
            amplitude: (0.5, 2.0),
            width: (8, 32),
            noise_free_prob: 0.5,
            noise_sigma: (0.005, 0.05),
            force_pattern: None,
            force_baseline: None,
            force_noise_free: false,
        }
    }
}

/// Sampled parameters of one draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndustrialParams {
    pub pattern: IndustrialPattern,
    pub baseline: f64,
    pub period: usize,
    pub amplitude: f64,
    pub width: usize,
    pub sigma: f64,
}

/// Linear ramps of `⌈w/4⌉` steps around a plateau at `a`.
pub fn trapezoid(w: usize, a: f64) -> Vec<f64> {
    let r = w.div_ceil(4);
    (0..w)
        .map(|j| {
            let edge = j.min(w - 1 - j);
            if edge < r {
                a * (edge + 1) as f64 / (r + 1) as f64
            } else {
                a
            }
        })
        .collect()
}

pub fn gen_industrial(cfg: &IndustrialGenConfig, seed: u64) -> TimeSeries {
    gen_industrial_with_params(cfg, seed).0
}

pub fn gen_industrial_with_params(cfg: &IndustrialGenConfig, seed: u64) -> (TimeSeries, IndustrialParams) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pattern = cfg.force_pattern.unwrap_or(if rng.random_bool(0.5) {
        IndustrialPattern::InvertedU
    } else {
        IndustrialPattern::Spikes
    });
    let baseline = rng.random_range(cfg.baseline.0..=cfg.baseline.1);
    let baseline = cfg.force_baseline.unwrap_or(baseline);
    let period = rng.random_range(cfg.period.0..=cfg.period.1);
    let amplitude = rng.random_range(cfg.amplitude.0..=cfg.amplitude.1);
    let width = rng.random_range(cfg.width.0..=cfg.width.1);
    let noise_free = rng.random_bool(cfg.noise_free_prob);
    let sigma_draw = rng.random_range(cfg.noise_sigma.0..=cfg.noise_sigma.1);
    let sigma = if cfg.force_noise_free || noise_free { 0.0 } else { sigma_draw };

    let l = cfg.length;
    let sign = match pattern {
        IndustrialPattern::InvertedU => -1.0,
        IndustrialPattern::Spikes => 1.0,
    };
    let event = trapezoid(width, amplitude);
    let mut x = vec![baseline; l];
    for start in (0..l).step_by(period.max(1)) {
        let end = (start + width).min(l);
        for (v, e) in x[start..end].iter_mut().zip(&event) {
            *v += sign * e;
        }
    }
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).expect("positive sigma");
        for v in x.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    let params = IndustrialParams {
        pattern,
        baseline,
        period,
        amplitude,
        width,
        sigma,
    };
    (TimeSeries::synthetic(format!("industrial-{seed}"), x), params)
}
