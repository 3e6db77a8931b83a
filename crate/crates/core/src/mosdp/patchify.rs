use crate::error::{Error, Result};

/// Non-overlapping coarsest-granularity patches of a left-padded series.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarsePatches {
    pub patch_size: usize,
    /// `N × p_S` values, row-major.
    pub values: Vec<f64>,
    /// Observation mask over the padded span; padding is `false`.
    pub observed: Vec<bool>,
    /// Leading zeros added so the length is a multiple of `p_S`.
    pub padding: usize,
}

impl CoarsePatches {
    pub fn count(&self) -> usize {
        self.values.len() / self.patch_size
    }

    pub fn patch(&self, n: usize) -> &[f64] {
        &self.values[n * self.patch_size..(n + 1) * self.patch_size]
    }

    pub fn patch_mask(&self, n: usize) -> &[bool] {
        &self.observed[n * self.patch_size..(n + 1) * self.patch_size]
    }
}

/// Split into `⌈T / p_S⌉` patches, left-padding with masked zeros.
pub fn patchify_coarsest(values: &[f64], observed: &[bool], patch_size: usize) -> Result<CoarsePatches> {
    if patch_size == 0 {
        return Err(Error::arg("coarsest patch size must be positive"));
    }
    if values.is_empty() {
        return Err(Error::arg("cannot patchify an empty series"));
    }
    if values.len() != observed.len() {
        return Err(Error::Shape("values and mask differ in length".into()));
    }
    let n = values.len().div_ceil(patch_size);
    let padding = n * patch_size - values.len();
    let mut v = vec![0.0; padding];
    v.extend_from_slice(values);
    let mut m = vec![false; padding];
    m.extend_from_slice(observed);
    Ok(CoarsePatches {
        patch_size,
        values: v,
        observed: m,
        padding,
    })
}
