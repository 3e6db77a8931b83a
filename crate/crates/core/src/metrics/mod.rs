//! Forecast scores, seasonal-naive normalization and the evaluation harness.

pub mod eval;
pub mod scores;

pub use eval::{
    evaluate, score_task, AggregateScores, Degenerate, EvalTask, Forecaster, ModelForecaster, Prediction,
    ScoreReport, Scores, SeasonalNaive, TaskScore, Window,
};
pub use scores::{
    aggregate, crps_from_parts, crps_quantile, crps_quantile_masked, mae, mae_masked, mase, mase_masked, mse,
    mse_masked, quantile_loss_parts, seasonal_naive, seasonal_scale, seasonality, Crps,
};
