//! Gate-weighted average patch size per coarsest patch.

use crate::error::Result;
use crate::mosdp::RoutingDecision;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// `Σ_i α_i p_i` over the active real experts.
pub fn weighted_patch_size(decision: &RoutingDecision, patch_sizes: &[usize]) -> f64 {
    decision
        .alphas()
        .iter()
        .zip(patch_sizes)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, &p)| a * p as f64)
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchSizeMap {
    pub id: String,
    /// One value per coarsest patch, in time steps.
    pub sizes: Vec<f64>,
    pub finest: Vec<usize>,
}

impl PatchSizeMap {
    pub fn from_decisions(id: &str, decisions: &[RoutingDecision], patch_sizes: &[usize]) -> Self {
        Self {
            id: id.to_string(),
            sizes: decisions.iter().map(|d| weighted_patch_size(d, patch_sizes)).collect(),
            finest: decisions.iter().map(|d| d.finest_size).collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.sizes.iter().sum::<f64>() / self.sizes.len().max(1) as f64
    }
}

/// `id, patch_index, weighted_size, finest_size` per coarsest patch.
pub fn write_patch_maps_csv(maps: &[PatchSizeMap], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["id", "patch_index", "weighted_size", "finest_size"])?;
    for m in maps {
        for (i, (s, f)) in m.sizes.iter().zip(&m.finest).enumerate() {
            out.write_record([m.id.clone(), i.to_string(), s.to_string(), f.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mosdp::{affinities, decide, PatchConfig};
    use proptest::prelude::*;

    fn decision(gates: Vec<f64>, finest: usize) -> RoutingDecision {
        RoutingDecision {
            affinity: vec![0.0; gates.len()],
            selected: (0..gates.len()).filter(|&i| gates[i] > 0.0).collect(),
            gates,
            finest_size: finest,
            token_count: 1,
        }
    }

    #[test]
    fn examples() {
        let sizes = [32, 64, 128];
        assert_eq!(weighted_patch_size(&decision(vec![0.0, 0.7, 0.0], 64), &sizes), 64.0);
        assert_eq!(weighted_patch_size(&decision(vec![0.3, 0.0, 0.3], 32), &sizes), 80.0);
    }

    proptest! {
        #[test]
        fn within_size_range(scores in prop::collection::vec(-3.0f64..3.0, 5)) {
            let cfg = PatchConfig::default();
            let d = decide(&affinities(&scores, &cfg), &cfg);
            if !d.active().is_empty() {
                let v = weighted_patch_size(&d, &cfg.patch_sizes);
                let lo = cfg.patch_sizes[0] as f64;
                let hi = *cfg.patch_sizes.last().unwrap() as f64;
                prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
            }
        }
    }
}
