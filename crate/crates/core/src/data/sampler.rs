//! Tier-weighted real/synthetic training-window sampler.

use crate::data::series::TimeSeries;
use crate::error::{Error, Result};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const DEFAULT_TIER_WEIGHTS: [f64; 5] = [0.35, 0.25, 0.2, 0.12, 0.08];

/// Series grouped by origin.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    /// Real series by tier `1..=5` (index `tier − 1`).
    pub tiers: [Vec<TimeSeries>; 5],
    pub synthetic: Vec<TimeSeries>,
}

impl Corpus {
    pub fn from_series(series: impl IntoIterator<Item = TimeSeries>) -> Self {
        let mut c = Corpus::default();
        for s in series {
            c.push(s);
        }
        c
    }

    pub fn push(&mut self, s: TimeSeries) {
        match s.tier {
            Some(t @ 1..=5) => self.tiers[t as usize - 1].push(s),
            _ => self.synthetic.push(s),
        }
    }

    pub fn real_count(&self) -> usize {
        self.tiers.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.real_count() == 0 && self.synthetic.is_empty()
    }
}

/// Where a draw came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Synthetic,
    Tier(u8),
}

/// One training window.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub context: Vec<f64>,
    pub context_mask: Vec<bool>,
    pub target: Vec<f64>,
    pub target_mask: Vec<bool>,
    pub source: Source,
    pub series_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSampler {
    pub tier_weights: [f64; 5],
    pub synthetic_fraction: f64,
}

impl Default for CorpusSampler {
    fn default() -> Self {
        Self {
            tier_weights: DEFAULT_TIER_WEIGHTS,
            synthetic_fraction: 0.2,
        }
    }
}

impl CorpusSampler {
    pub fn validate(&self) -> Result<()> {
        if self.tier_weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::config("tier weights must be positive"));
        }
        if !(0.0..=1.0).contains(&self.synthetic_fraction) {
            return Err(Error::config("synthetic fraction must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn normalized_weights(&self) -> [f64; 5] {
        let s: f64 = self.tier_weights.iter().sum();
        self.tier_weights.map(|w| w / s)
    }

    /// Pick a source: synthetic with the configured fraction, else a tier by
    /// weight. Empty sources are skipped by renormalizing over the rest.
    pub fn draw_source(&self, corpus: &Corpus, rng: &mut impl Rng) -> Result<Source> {
        let has_real = corpus.real_count() > 0;
        let has_syn = !corpus.synthetic.is_empty();
        let synthetic = match (has_real, has_syn) {
            (false, false) => return Err(Error::arg("empty corpus")),
            (true, false) => false,
            (false, true) => true,
            (true, true) => rng.random_bool(self.synthetic_fraction),
        };
        if synthetic {
            return Ok(Source::Synthetic);
        }
        let w: Vec<f64> = (0..5)
            .map(|t| if corpus.tiers[t].is_empty() { 0.0 } else { self.tier_weights[t] })
            .collect();
        let dist = WeightedIndex::new(&w).map_err(|e| Error::config(e.to_string()))?;
        Ok(Source::Tier(dist.sample(rng) as u8 + 1))
    }

    /// Draw one `(context, target)` window. Short series are left-padded with
    /// masked zeros; series shorter than `horizon + 1` are skipped.
    pub fn sample(&self, corpus: &Corpus, context: usize, horizon: usize, rng: &mut impl Rng) -> Result<Example> {
        for _ in 0..1000 {
            let source = self.draw_source(corpus, rng)?;
            let pool = match source {
                Source::Synthetic => &corpus.synthetic,
                Source::Tier(t) => &corpus.tiers[t as usize - 1],
            };
            let s = &pool[rng.random_range(0..pool.len())];
            if s.len() < horizon + 1 {
                log::warn!("series {} shorter than horizon + 1; skipped", s.id);
                continue;
            }
            let ex = window(s, context, horizon, rng);
            if !ex.context_mask.iter().any(|&m| m) {
                continue;
            }
            return Ok(Example { source, ..ex });
        }
        Err(Error::arg("no series in the corpus yields a usable window"))
    }

    pub fn sample_batch(
        &self,
        corpus: &Corpus,
        batch: usize,
        context: usize,
        horizon: usize,
        rng: &mut impl Rng,
    ) -> Result<Vec<Example>> {
        (0..batch).map(|_| self.sample(corpus, context, horizon, rng)).collect()
    }
}

/// Uniform valid window of `context + horizon` steps from one series.
pub fn window(s: &TimeSeries, context: usize, horizon: usize, rng: &mut impl Rng) -> Example {
    let total = context + horizon;
    let (ctx_start, ctx_end) = if s.len() >= total {
        let start = rng.random_range(0..=s.len() - total);
        (start, start + context)
    } else {
        (0, s.len() - horizon)
    };
    let pad = context - (ctx_end - ctx_start);
    let mut cv = vec![0.0; pad];
    let mut cm = vec![false; pad];
    cv.extend_from_slice(&s.values[ctx_start..ctx_end]);
    cm.extend_from_slice(&s.mask[ctx_start..ctx_end]);
    Example {
        context: cv,
        context_mask: cm,
        target: s.values[ctx_end..ctx_end + horizon].to_vec(),
        target_mask: s.mask[ctx_end..ctx_end + horizon].to_vec(),
        source: match s.tier {
            Some(t) => Source::Tier(t),
            None => Source::Synthetic,
        },
        series_id: s.id.clone(),
    }
}
