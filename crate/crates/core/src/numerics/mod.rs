//! Dense tensors, the real FFT, row-wise primitives and reverse-mode gradients.

pub mod fft;
pub mod gradcheck;
pub mod ops;
pub mod params;
pub mod tape;
mod tensor;

pub use fft::{rfft_amplitude, Spectrum};
pub use gradcheck::{finite_diff_grad, finite_diff_grad_subset, relative_error};
pub use ops::{gelu, layer_norm, softmax, LAYER_NORM_EPS};
pub use params::{Gradients, ParamEntry, ParamGroup, ParamId, ParamStore};
pub use tape::{grad, Precision, Tape, Var};
pub use tensor::Tensor;
