//! Pointwise and row-wise primitives shared by the tape and plain code paths.

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    out
}

pub fn softmax_in_place(x: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        // every entry masked out
        let u = 1.0 / x.len() as f64;
        x.iter_mut().for_each(|v| *v = u);
        return;
    }
    let mut sum = 0.0;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in x.iter_mut() {
        *v /= sum;
    }
}

/// Layer normalization with affine `gain`/`offset`.
pub fn layer_norm(x: &[f64], gain: &[f64], offset: &[f64], eps: f64) -> Vec<f64> {
    assert_eq!(x.len(), gain.len());
    assert_eq!(x.len(), offset.len());
    let (mean, rstd) = moments(x, eps);
    x.iter()
        .zip(gain.iter().zip(offset))
        .map(|(&v, (&g, &b))| (v - mean) * rstd * g + b)
        .collect()
}

/// Mean and reciprocal standard deviation `1/sqrt(var + eps)`.
pub(crate) fn moments(x: &[f64], eps: f64) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, 1.0 / (var + eps).sqrt())
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// GELU, tanh approximation.
pub fn gelu(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

/// Rotate consecutive coordinate pairs of each row by `position · theta[j]`.
///
/// `x` is `rows × cols` row-major with `cols = 2 · theta.len()`.
pub fn rotate_pairs(x: &[f64], cols: usize, theta: &[f64], positions: &[f64]) -> Vec<f64> {
    assert_eq!(cols, 2 * theta.len(), "rotation needs cols = 2 * theta.len()");
    assert_eq!(x.len(), cols * positions.len(), "one position per row");
    let mut out = vec![0.0; x.len()];
    for (r, &pos) in positions.iter().enumerate() {
        let row = &x[r * cols..(r + 1) * cols];
        let orow = &mut out[r * cols..(r + 1) * cols];
        for (j, &th) in theta.iter().enumerate() {
            let (s, c) = (pos * th).sin_cos();
            let (a, b) = (row[2 * j], row[2 * j + 1]);
            orow[2 * j] = a * c - b * s;
            orow[2 * j + 1] = a * s + b * c;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        let p = softmax(&[1f64.ln(), 3f64.ln()]);
        assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.75).abs() < 1e-15);
        let p = softmax(&[1000.0, 0.0]);
        assert!((p[0] - 1.0).abs() < 1e-12 && p[1] >= 0.0 && p[1] < 1e-300);
    }

    #[test]
    fn layer_norm_examples() {
        let out = layer_norm(&[1.0, 1.0, 1.0], &[1.0; 3], &[0.0; 3], LAYER_NORM_EPS);
        assert_eq!(out, vec![0.0, 0.0, 0.0]);
        let out = layer_norm(&[-1.0, 1.0], &[1.0; 2], &[0.0; 2], LAYER_NORM_EPS);
        let expect = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert!((out[0] + expect).abs() < 1e-15 && (out[1] - expect).abs() < 1e-15);
        let out = layer_norm(&[3.0, -7.0, 2.0], &[0.0; 3], &[0.5, 1.5, -2.0], LAYER_NORM_EPS);
        assert_eq!(out, vec![0.5, 1.5, -2.0]);
    }

    #[test]
    fn gelu_grad_matches_difference() {
        for &x in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-5;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    proptest! {
        #[test]
        fn softmax_is_distribution(x in proptest::collection::vec(-1e6f64..1e6, 1..32), c in -1e3f64..1e3) {
            let p = softmax(&x);
            prop_assert!(p.iter().all(|v| *v >= 0.0 && v.is_finite()));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
            let q = softmax(&shifted);
            if x.iter().all(|v| v.abs() < 1e3) {
                for (a, b) in p.iter().zip(&q) {
                    prop_assert!((a - b).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn layer_norm_standardizes(x in proptest::collection::vec(-50.0f64..50.0, 2..32)) {
            let n = x.len();
            let out = layer_norm(&x, &vec![1.0; n], &vec![0.0; n], LAYER_NORM_EPS);
            let mean = out.iter().sum::<f64>() / n as f64;
            let var = out.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            prop_assert!(mean.abs() < 1e-9);
            let raw_mean = x.iter().sum::<f64>() / n as f64;
            let raw_var = x.iter().map(|v| (v - raw_mean) * (v - raw_mean)).sum::<f64>() / n as f64;
            let expect = raw_var / (raw_var + LAYER_NORM_EPS);
            prop_assert!((var - expect).abs() < 1e-9);
        }
    }
}
