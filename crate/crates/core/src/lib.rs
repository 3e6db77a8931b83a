//! Dynamic multi-granularity patch tokenization, instance-adaptive rotary
//! position embeddings and multi-patch quantile forecasting for univariate
//! time series, with the training loss, synthetic generators, spectral
//! diagnostics and an evaluation harness.

pub mod analysis;
pub mod data;
pub mod error;
pub mod iarope;
pub mod kv;
pub mod metrics;
pub mod model;
pub mod mosdp;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
