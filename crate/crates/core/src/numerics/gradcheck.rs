//! Central finite differences, used as the independent oracle for the tape.

use crate::numerics::params::{Gradients, ParamId, ParamStore};
use crate::numerics::Tensor;

/// Central-difference gradient `(f(p+h) − f(p−h)) / 2h` for every coordinate of
/// every parameter in `params`.
pub fn finite_diff_grad<F>(params: &ParamStore, f: F, h: f64) -> Gradients
where
    F: Fn(&ParamStore) -> f64,
{
    let ids: Vec<ParamId> = params.ids().collect();
    finite_diff_grad_subset(params, &ids, f, h)
}

/// As [`finite_diff_grad`], restricted to `ids`.
pub fn finite_diff_grad_subset<F>(params: &ParamStore, ids: &[ParamId], f: F, h: f64) -> Gradients
where
    F: Fn(&ParamStore) -> f64,
{
    assert!(h > 0.0, "step size must be positive");
    let mut work = params.clone();
    let mut out = Gradients::empty(params.len());
    for &id in ids {
        let n = params.value(id).len();
        let mut g = vec![0.0; n];
        for (i, gi) in g.iter_mut().enumerate() {
            let orig = params.value(id).data()[i];
            work.value_mut(id).data_mut()[i] = orig + h;
            let up = f(&work);
            work.value_mut(id).data_mut()[i] = orig - h;
            let down = f(&work);
            work.value_mut(id).data_mut()[i] = orig;
            *gi = (up - down) / (2.0 * h);
        }
        out.set(id, Tensor::new(params.value(id).shape().to_vec(), g).unwrap());
    }
    out
}

/// Norm-wise relative error `‖a − b‖ / max(‖a‖, ‖b‖, floor)`.
pub fn relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(floor)
}
