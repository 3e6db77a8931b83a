use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// How router affinities are normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SoftmaxScope {
    /// Softmax over all real and null experts.
    #[default]
    AllExperts,
    /// Denominator summed over the real experts only; null affinities may
    /// then exceed one.
    RealOnly,
}

/// Patch-size experts, null experts and load-balancing targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchConfig {
    /// Strictly increasing patch sizes `p_1 < … < p_S`.
    pub patch_sizes: Vec<usize>,
    /// Number of null experts `Z`.
    pub null_experts: usize,
    /// Experts activated per coarsest patch.
    pub top_k: usize,
    /// Target load share over all `S + Z` experts.
    pub target_load: Vec<f64>,
    pub bias_update_speed: f64,
    pub softmax_scope: SoftmaxScope,
}

impl Default for PatchConfig {
    fn default() -> Self {
        Self {
            patch_sizes: vec![32, 64, 128],
            null_experts: 2,
            top_k: 3,
            target_load: vec![0.55, 0.1, 0.05, 0.15, 0.15],
            bias_update_speed: 0.01,
            softmax_scope: SoftmaxScope::AllExperts,
        }
    }
}

impl PatchConfig {
    /// A single fixed patch size, with routing reduced to a no-op.
    pub fn fixed(size: usize) -> Self {
        Self {
            patch_sizes: vec![size],
            null_experts: 0,
            top_k: 1,
            target_load: vec![1.0],
            bias_update_speed: 0.01,
            softmax_scope: SoftmaxScope::AllExperts,
        }
    }

    /// Real experts `S`.
    pub fn real_experts(&self) -> usize {
        self.patch_sizes.len()
    }

    /// `S + Z`.
    pub fn total_experts(&self) -> usize {
        self.patch_sizes.len() + self.null_experts
    }

    /// Coarsest size `p_S`.
    pub fn coarsest(&self) -> usize {
        *self.patch_sizes.last().expect("validated config has sizes")
    }

    pub fn finest(&self) -> usize {
        self.patch_sizes[0]
    }

    pub fn is_null(&self, expert: usize) -> bool {
        expert >= self.patch_sizes.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_sizes.is_empty() {
            return Err(Error::config("at least one patch size required"));
        }
        if self.patch_sizes[0] == 0 {
            return Err(Error::config("patch sizes must be positive"));
        }
        if !self.patch_sizes.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::config("patch sizes must be strictly increasing"));
        }
        let ps = self.coarsest();
        if let Some(p) = self.patch_sizes.iter().find(|&&p| !ps.is_multiple_of(p)) {
            return Err(Error::config(format!(
                "coarsest size {ps} is not divisible by {p}"
            )));
        }
        let total = self.total_experts();
        if self.top_k == 0 || self.top_k > total {
            return Err(Error::config(format!("top_k must lie in 1..={total}")));
        }
        if self.top_k <= self.null_experts {
            return Err(Error::config(
                "top_k must exceed the number of null experts",
            ));
        }
        if self.target_load.len() != total {
            return Err(Error::config(format!(
                "target_load needs {total} entries, has {}",
                self.target_load.len()
            )));
        }
        if self.target_load.iter().any(|&t| !(t >= 0.0)) {
            return Err(Error::config("target_load entries must be non-negative"));
        }
        let sum: f64 = self.target_load.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("target_load sums to {sum}, not 1")));
        }
        if !(self.bias_update_speed > 0.0) {
            return Err(Error::config("bias_update_speed must be positive"));
        }
        Ok(())
    }
}
