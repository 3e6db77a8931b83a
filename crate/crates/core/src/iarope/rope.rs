use crate::error::{Error, Result};
use crate::numerics::ops::rotate_pairs;
use serde::{Deserialize, Serialize};

/// Where the modulation `(γ, β)` is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModulationSpace {
    /// `θ′ = exp(γ · ln θ + β)`, evaluated as `θ · exp((γ − 1) · ln θ + β)`
    #[default]
    Log,
    /// `θ′ = γ · θ + β`
    Linear,
}

/// `θ_init,j = b^{−2j/D_h}` for `j = 0..D_h/2`.
pub fn base_frequencies(head_dim: usize, base: f64) -> Result<Vec<f64>> {
    if head_dim == 0 || !head_dim.is_multiple_of(2) {
        return Err(Error::arg(format!("rotary head dim must be even and positive, got {head_dim}")));
    }
    if !(base > 1.0) {
        return Err(Error::arg(format!("rotary base must exceed 1, got {base}")));
    }
    Ok((0..head_dim / 2)
        .map(|j| base.powf(-2.0 * j as f64 / head_dim as f64))
        .collect())
}

pub fn adapt_frequencies(theta: &[f64], gamma: &[f64], beta: &[f64], space: ModulationSpace) -> Vec<f64> {
    assert_eq!(theta.len(), gamma.len(), "gamma width");
    assert_eq!(theta.len(), beta.len(), "beta width");
    theta
        .iter()
        .zip(gamma.iter().zip(beta))
        .map(|(&t, (&g, &b))| match space {
            // θ·exp((γ−1)·ln θ + β): exactly θ at the identity modulation
            ModulationSpace::Log => {
                let ln = t.ln();
                t * (g * ln - ln + b).exp()
            }
            ModulationSpace::Linear => g * t + b,
        })
        .collect()
}

/// Rotate each `D_h`-row at its position by `position · θ′`.
pub fn apply_rotation(vectors: &[f64], head_dim: usize, positions: &[f64], theta: &[f64]) -> Vec<f64> {
    rotate_pairs(vectors, head_dim, theta, positions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{E, FRAC_PI_2};

    #[test]
    fn spot_values() {
        let t = base_frequencies(64, 10000.0).unwrap();
        assert_eq!(t[0], 1.0);
        assert!((t[31] - 1.33e-4).abs() / 1.33e-4 < 0.01);
        assert!(t.windows(2).all(|w| w[0] > w[1]));
        let t = base_frequencies(4, E).unwrap();
        assert!((t[1] - (-0.5f64).exp()).abs() < 1e-15);
        assert!(base_frequencies(4, 1.0).is_err());
        assert!(base_frequencies(5, 10.0).is_err());
    }

    #[test]
    fn adaptation_examples() {
        let t = base_frequencies(8, 10000.0).unwrap();
        let id = adapt_frequencies(&t, &[1.0; 4], &[0.0; 4], ModulationSpace::Log);
        assert_eq!(id, t);
        let ones = adapt_frequencies(&t, &[0.0; 4], &[0.0; 4], ModulationSpace::Log);
        assert!(ones.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let doubled = adapt_frequencies(&t, &[1.0; 4], &[2f64.ln(); 4], ModulationSpace::Log);
        for (a, b) in doubled.iter().zip(&t) {
            assert!((a - 2.0 * b).abs() < 1e-12 * b);
        }
        let lin = adapt_frequencies(&t, &[2.0; 4], &[0.5; 4], ModulationSpace::Linear);
        assert_eq!(lin[0], 2.5);
    }

    #[test]
    fn rotation_examples() {
        let r = apply_rotation(&[1.0, 0.0], 2, &[1.0], &[FRAC_PI_2]);
        assert!(r[0].abs() < 1e-15 && (r[1] - 1.0).abs() < 1e-15);
        let z = [0.3, -1.2, 2.0, 0.7];
        assert_eq!(apply_rotation(&z, 4, &[0.0], &[1.0, 0.1]), z.to_vec());
    }

    proptest! {
        #[test]
        fn rotation_preserves_norm(
            z in proptest::collection::vec(-10.0f64..10.0, 16),
            pos in 0usize..4096,
        ) {
            let theta = base_frequencies(16, 10000.0).unwrap();
            let r = apply_rotation(&z, 16, &[pos as f64], &theta);
            let n0: f64 = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            let n1: f64 = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((n0 - n1).abs() <= 1e-10 * n0.max(1e-300));
        }
    }
}
