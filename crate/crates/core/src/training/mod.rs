//! Quantile loss, optimizer, configuration and the training loop.

pub mod config;
pub mod loss;
pub mod optim;
pub mod trainer;

pub use config::TrainConfig;
pub use loss::{batch_loss, horizon_weights, pinball, LossConfig, Target, MEDIAN_INDEX, QUANTILE_LEVELS};
pub use optim::{clip_global_norm, linear_decay, AdamW, OptimConfig};
pub use trainer::{batch_seed, example_gradients, StepReport, Trainer};
