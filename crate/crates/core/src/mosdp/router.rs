//! Dynamic patch router: affinity scores, top-K selection over real and null
//! experts, and the derived finest patch size.

use crate::error::{Error, Result};
use crate::mosdp::config::{PatchConfig, SoftmaxScope};
use crate::numerics::{softmax, Tensor};
use serde::{Deserialize, Serialize};

/// Router weights (`p_S × (S+Z)`) and the load-balancing biases.
#[derive(Debug, Clone, PartialEq)]
pub struct RouterState {
    pub weights: Tensor,
    pub bias: Vec<f64>,
}

impl RouterState {
    pub fn zeros(cfg: &PatchConfig) -> Self {
        Self {
            weights: Tensor::zeros(&[cfg.coarsest(), cfg.total_experts()]),
            bias: vec![0.0; cfg.total_experts()],
        }
    }
}

/// Routing outcome for one coarsest patch.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingDecision {
    /// Normalized affinities `s′` over all `S + Z` experts.
    pub affinity: Vec<f64>,
    /// The `K` selected experts, best first.
    pub selected: Vec<usize>,
    /// Gate per real expert; zero unless selected.
    pub gates: Vec<f64>,
    /// Finest active patch size `p_k`.
    pub finest_size: usize,
    /// `M_n = p_S / p_k`.
    pub token_count: usize,
}

impl RoutingDecision {
    /// Selected real experts in ascending index order.
    pub fn active(&self) -> Vec<usize> {
        let mut a: Vec<usize> = (0..self.gates.len()).filter(|&i| self.gates[i] > 0.0).collect();
        a.sort_unstable();
        a
    }

    /// Normalized fusion weights `α_i = g_i / Σ g_j` over the active experts.
    pub fn alphas(&self) -> Vec<f64> {
        let total: f64 = self.gates.iter().sum();
        self.gates.iter().map(|g| g / total).collect()
    }

    pub fn record(&self, patch_index: usize) -> RoutingRecord {
        RoutingRecord {
            patch_index,
            selected: self.selected.clone(),
            gates: self.gates.clone(),
            finest_size: self.finest_size,
        }
    }
}

/// JSON-lines export of a routing decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingRecord {
    pub patch_index: usize,
    pub selected: Vec<usize>,
    pub gates: Vec<f64>,
    pub finest_size: usize,
}

/// Normalize biased scores `s + b` into affinities `s′`.
pub fn affinities(biased: &[f64], cfg: &PatchConfig) -> Vec<f64> {
    match cfg.softmax_scope {
        SoftmaxScope::AllExperts => softmax(biased),
        SoftmaxScope::RealOnly => {
            let s = cfg.real_experts();
            let max = biased[..s].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = biased.iter().map(|v| (v - max).exp()).collect();
            let denom: f64 = e[..s].iter().sum();
            e.iter().map(|v| v / denom).collect()
        }
    }
}

/// Top-K over all experts (ties to the lower index), gates for the selected
/// real experts, and the finest active size.
pub fn decide(affinity: &[f64], cfg: &PatchConfig) -> RoutingDecision {
    let total = cfg.total_experts();
    assert_eq!(affinity.len(), total, "affinity width");
    let mut order: Vec<usize> = (0..total).collect();
    order.sort_by(|&a, &b| affinity[b].total_cmp(&affinity[a]).then(a.cmp(&b)));
    let selected: Vec<usize> = order[..cfg.top_k].to_vec();

    let s = cfg.real_experts();
    let mut gates = vec![0.0; s];
    for &i in &selected {
        if i < s {
            // a selected real expert keeps a strictly positive gate even if its
            // affinity underflowed
            gates[i] = affinity[i].max(f64::MIN_POSITIVE);
        }
    }
    let finest = (0..s)
        .find(|&i| gates[i] > 0.0)
        .expect("K > Z guarantees a real expert");
    let finest_size = cfg.patch_sizes[finest];
    RoutingDecision {
        affinity: affinity.to_vec(),
        selected,
        gates,
        finest_size,
        token_count: cfg.coarsest() / finest_size,
    }
}

/// Route one coarsest patch.
pub fn route(patch: &[f64], state: &RouterState, cfg: &PatchConfig) -> Result<RoutingDecision> {
    let ps = cfg.coarsest();
    if patch.len() != ps {
        return Err(Error::Shape(format!(
            "patch length {} != coarsest size {ps}",
            patch.len()
        )));
    }
    let scores = Tensor::row(patch.to_vec()).matmul(&state.weights)?;
    let biased: Vec<f64> = scores
        .data()
        .iter()
        .zip(&state.bias)
        .map(|(s, b)| s + b)
        .collect();
    Ok(decide(&affinities(&biased, cfg), cfg))
}
