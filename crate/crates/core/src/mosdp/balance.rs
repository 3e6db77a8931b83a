//! Auxiliary-loss-free load balancing of the router biases.

use crate::mosdp::config::PatchConfig;
use crate::mosdp::router::RoutingDecision;

/// Per-expert load over `S + Z` experts: each patch contributes its selected
/// experts' affinities, renormalized over the selection.
pub fn accumulate_load<'a>(decisions: impl IntoIterator<Item = &'a RoutingDecision>, cfg: &PatchConfig) -> Vec<f64> {
    let mut load = vec![0.0; cfg.total_experts()];
    for d in decisions {
        let total: f64 = d.selected.iter().map(|&i| d.affinity[i]).sum();
        if total > 0.0 {
            for &i in &d.selected {
                load[i] += d.affinity[i] / total;
            }
        } else {
            for &i in &d.selected {
                load[i] += 1.0 / d.selected.len() as f64;
            }
        }
    }
    load
}

/// `b_i += η (τ_i ΣL − L_i) / ΣL`. Returns the applied deltas; zero total load
/// leaves the biases alone.
pub fn update_bias(bias: &mut [f64], load: &[f64], cfg: &PatchConfig) -> Vec<f64> {
    assert_eq!(bias.len(), load.len(), "bias / load width");
    let total: f64 = load.iter().sum();
    if !(total > 0.0) {
        log::warn!("zero total expert load; router biases unchanged");
        return vec![0.0; bias.len()];
    }
    let deltas: Vec<f64> = load
        .iter()
        .zip(&cfg.target_load)
        .map(|(&l, &t)| cfg.bias_update_speed * (t * total - l) / total)
        .collect();
    for (b, d) in bias.iter_mut().zip(&deltas) {
        *b += d;
    }
    deltas
}
