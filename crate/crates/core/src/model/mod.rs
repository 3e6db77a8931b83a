//! Encoder–decoder quantile forecaster over dynamic patch tokens.

pub mod checkpoint;
pub mod config;
pub mod layers;
pub mod network;
pub mod rollout;

pub use checkpoint::Checkpoint;
pub use config::ModelConfig;
pub use network::{Model, ModelPredictor, ModulationSource, PassGraph};
pub use rollout::{rollout, PassPredictor, QuantileForecast, Standardization};
