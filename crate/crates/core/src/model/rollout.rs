//! Per-instance standardization and multi-pass autoregressive rollout.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Context mean and standard deviation (floored) of one instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub scale: f64,
}

impl Standardization {
    /// Statistics over the observed points of the context.
    pub fn fit(values: &[f64], observed: &[bool], floor: f64) -> Result<Self> {
        let obs: Vec<f64> = values
            .iter()
            .zip(observed)
            .filter(|(_, &o)| o)
            .map(|(&v, _)| v)
            .collect();
        if obs.is_empty() {
            return Err(Error::arg("context has no observed values"));
        }
        let n = obs.len() as f64;
        let mean = obs.iter().sum::<f64>() / n;
        let var = obs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Ok(Self {
            mean,
            scale: var.sqrt().max(floor),
        })
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.scale
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.scale + self.mean
    }

    /// Standardized values with unobserved points set to zero.
    pub fn apply_masked(&self, values: &[f64], observed: &[bool]) -> Vec<f64> {
        values
            .iter()
            .zip(observed)
            .map(|(&v, &o)| if o { self.apply(v) } else { 0.0 })
            .collect()
    }
}

/// Horizon × level quantile grid in original units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileForecast {
    pub levels: Vec<f64>,
    /// `H × levels.len()`, row-major.
    pub values: Vec<f64>,
    pub stats: Standardization,
    pub passes: usize,
}

impl QuantileForecast {
    pub fn horizon(&self) -> usize {
        self.values.len() / self.levels.len()
    }

    pub fn step(&self, t: usize) -> &[f64] {
        let k = self.levels.len();
        &self.values[t * k..(t + 1) * k]
    }

    /// Path of level index `k` over the horizon.
    pub fn level(&self, k: usize) -> Vec<f64> {
        self.values.chunks(self.levels.len()).map(|row| row[k]).collect()
    }

    pub fn median_index(&self) -> usize {
        (0..self.levels.len())
            .min_by(|&a, &b| (self.levels[a] - 0.5).abs().total_cmp(&(self.levels[b] - 0.5).abs()))
            .unwrap_or(0)
    }

    pub fn median(&self) -> Vec<f64> {
        self.level(self.median_index())
    }
}

/// One decoder pass in standardized units.
pub trait PassPredictor {
    /// Steps produced per pass.
    fn pass_len(&self) -> usize;
    fn levels(&self) -> &[f64];
    /// Longest context a pass looks at.
    fn max_context(&self) -> usize;
    fn std_floor(&self) -> f64 {
        1e-6
    }
    /// `pass_len × levels` row-major quantiles for a standardized context.
    fn predict_pass(&self, context: &[f64], observed: &[bool]) -> Result<Vec<f64>>;
}

/// Forecast `horizon` steps: standardize with the original context's
/// statistics, run `⌈H / pass_len⌉` passes feeding medians back, truncate,
/// sort each step's quantiles and de-standardize.
pub fn rollout<P: PassPredictor + ?Sized>(
    predictor: &P,
    values: &[f64],
    observed: &[bool],
    horizon: usize,
) -> Result<QuantileForecast> {
    if horizon == 0 {
        return Err(Error::arg("horizon must be at least 1"));
    }
    if values.len() != observed.len() {
        return Err(Error::Shape("values and mask differ in length".into()));
    }
    let stats = Standardization::fit(values, observed, predictor.std_floor())?;
    let levels = predictor.levels().to_vec();
    let k = levels.len();
    let per_pass = predictor.pass_len();
    let passes = horizon.div_ceil(per_pass);
    let median = (0..k)
        .min_by(|&a, &b| (levels[a] - 0.5).abs().total_cmp(&(levels[b] - 0.5).abs()))
        .unwrap_or(0);

    let mut ctx = stats.apply_masked(values, observed);
    let mut obs = observed.to_vec();
    let mut out = Vec::with_capacity(passes * per_pass * k);
    for _ in 0..passes {
        let start = ctx.len().saturating_sub(predictor.max_context());
        let q = predictor.predict_pass(&ctx[start..], &obs[start..])?;
        if q.len() != per_pass * k {
            return Err(Error::Shape(format!(
                "pass produced {} values, expected {}",
                q.len(),
                per_pass * k
            )));
        }
        ctx.extend(q.chunks(k).map(|row| row[median]));
        obs.extend(std::iter::repeat_n(true, per_pass));
        out.extend_from_slice(&q);
    }
    out.truncate(horizon * k);
    for row in out.chunks_mut(k) {
        row.sort_by(f64::total_cmp);
        for v in row.iter_mut() {
            *v = stats.invert(*v);
        }
    }
    Ok(QuantileForecast {
        levels,
        values: out,
        stats,
        passes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    /// Repeats the last context value at every level and counts passes.
    struct Echo {
        calls: Cell<usize>,
        levels: Vec<f64>,
    }

    impl PassPredictor for Echo {
        fn pass_len(&self) -> usize {
            6
        }
        fn levels(&self) -> &[f64] {
            &self.levels
        }
        fn max_context(&self) -> usize {
            32
        }
        fn predict_pass(&self, context: &[f64], _: &[bool]) -> Result<Vec<f64>> {
            self.calls.set(self.calls.get() + 1);
            let last = *context.last().unwrap();
            Ok(vec![last; 6 * self.levels.len()])
        }
    }

    /// Emits crossing quantiles `k ↦ −k` offset by the pass number.
    struct Crossing {
        calls: Cell<usize>,
    }

    impl PassPredictor for Crossing {
        fn pass_len(&self) -> usize {
            4
        }
        fn levels(&self) -> &[f64] {
            &[0.1, 0.5, 0.9]
        }
        fn max_context(&self) -> usize {
            100
        }
        fn predict_pass(&self, context: &[f64], _: &[bool]) -> Result<Vec<f64>> {
            let p = self.calls.get() as f64;
            self.calls.set(self.calls.get() + 1);
            assert!(context.len() >= 10);
            Ok((0..12).map(|i| -((i % 3) as f64) + p).collect())
        }
    }

    fn echo() -> Echo {
        Echo {
            calls: Cell::new(0),
            levels: vec![0.1, 0.5, 0.9],
        }
    }

    #[test]
    fn pass_counts() {
        let v: Vec<f64> = (0..20).map(|t| t as f64).collect();
        let m = vec![true; 20];
        for (h, want) in [(6, 1), (12, 2), (7, 2), (1, 1), (13, 3)] {
            let e = echo();
            let f = rollout(&e, &v, &m, h).unwrap();
            assert_eq!(e.calls.get(), want);
            assert_eq!(f.passes, want);
            assert_eq!(f.values.len(), h * 3);
        }
    }

    #[test]
    fn echo_rollout_is_constant() {
        let v: Vec<f64> = (0..20).map(|t| (t as f64 * 0.4).sin() * 3.0 + 7.0).collect();
        let f = rollout(&echo(), &v, &[true; 20], 17).unwrap();
        let last = v[19];
        for m in f.median() {
            assert!((m - last).abs() < 1e-12);
        }
    }

    #[test]
    fn quantiles_sorted_and_fed_back() {
        let v: Vec<f64> = (0..10).map(|t| t as f64).collect();
        let f = rollout(&Crossing { calls: Cell::new(0) }, &v, &[true; 10], 8).unwrap();
        for t in 0..8 {
            assert!(f.step(t).windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn zero_horizon_rejected() {
        assert!(rollout(&echo(), &[1.0, 2.0], &[true, true], 0).is_err());
    }

    #[test]
    fn standardization_floor_and_mask() {
        let s = Standardization::fit(&[5.0, 5.0, 100.0], &[true, true, false], 1e-6).unwrap();
        assert_eq!(s.mean, 5.0);
        assert_eq!(s.scale, 1e-6);
        assert!(Standardization::fit(&[1.0], &[false], 1e-6).is_err());
    }
}
