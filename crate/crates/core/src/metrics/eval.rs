//! Rolling-window evaluation against a seasonal-naive baseline.

use crate::data::TimeSeries;
use crate::error::{Error, Result};
use crate::metrics::scores::{
    aggregate, crps_from_parts, mae_masked, mase_masked, mse_masked, quantile_loss_parts, seasonal_naive,
    seasonality,
};
use crate::model::{Model, ModulationSource};
use crate::training::loss::QUANTILE_LEVELS;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Quantile and point forecast for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub levels: Vec<f64>,
    /// `H × K` row-major.
    pub quantiles: Vec<f64>,
    pub point: Vec<f64>,
}

pub trait Forecaster: Sync {
    fn name(&self) -> String;
    fn predict(&self, context: &[f64], observed: &[bool], horizon: usize, m_seas: usize) -> Result<Prediction>;
}

/// Repeat the last season; every quantile equals the point forecast.
#[derive(Debug, Clone, Copy, Default)]
pub struct SeasonalNaive;

impl Forecaster for SeasonalNaive {
    fn name(&self) -> String {
        "seasonal_naive".into()
    }

    fn predict(&self, context: &[f64], observed: &[bool], horizon: usize, m_seas: usize) -> Result<Prediction> {
        // Carry the last observed value into gaps so the lookback is defined.
        let mut filled = Vec::with_capacity(context.len());
        let mut last = None;
        for (&v, &o) in context.iter().zip(observed) {
            if o {
                last = Some(v);
            }
            filled.push(last.unwrap_or(v));
        }
        let point = seasonal_naive(&filled, m_seas, horizon)?;
        let k = QUANTILE_LEVELS.len();
        Ok(Prediction {
            levels: QUANTILE_LEVELS.to_vec(),
            quantiles: point.iter().flat_map(|&v| std::iter::repeat_n(v, k)).collect(),
            point,
        })
    }
}

/// A trained model; the point forecast is the median quantile.
pub struct ModelForecaster<'a> {
    pub model: &'a Model,
    pub source: ModulationSource<'a>,
    pub label: String,
}

impl<'a> ModelForecaster<'a> {
    pub fn new(model: &'a Model) -> Self {
        Self {
            model,
            source: ModulationSource::Instance,
            label: "model".into(),
        }
    }
}

impl Forecaster for ModelForecaster<'_> {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn predict(&self, context: &[f64], observed: &[bool], horizon: usize, _m: usize) -> Result<Prediction> {
        let f = self.model.forecast_with(context, observed, horizon, self.source)?;
        Ok(Prediction {
            point: f.median(),
            levels: f.levels.clone(),
            quantiles: f.values.clone(),
        })
    }
}

/// Evaluation windows over a set of series sharing horizon and season.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalTask {
    pub name: String,
    pub horizon: usize,
    /// Seasonal period; `None` derives it from each series' frequency tag.
    pub m_seas: Option<usize>,
    /// Steps between consecutive window ends; `None` uses the horizon.
    pub stride: Option<usize>,
    /// Windows per series, counted back from the end.
    pub windows: usize,
    /// Context handed to the forecaster; `None` passes the full history.
    pub context: Option<usize>,
    #[serde(skip)]
    pub series: Vec<TimeSeries>,
}

/// One forecast origin.
#[derive(Debug, Clone)]
pub struct Window<'a> {
    pub series: &'a TimeSeries,
    /// Index of the first target step.
    pub origin: usize,
    pub m_seas: usize,
}

impl EvalTask {
    pub fn new(name: impl Into<String>, series: Vec<TimeSeries>, horizon: usize) -> Self {
        Self {
            name: name.into(),
            horizon,
            m_seas: None,
            stride: None,
            windows: 1,
            context: None,
            series,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.windows == 0 {
            return Err(Error::config(format!("task {}: horizon and windows must be positive", self.name)));
        }
        if self.m_seas == Some(0) || self.stride == Some(0) {
            return Err(Error::config(format!("task {}: m_seas and stride must be at least 1", self.name)));
        }
        Ok(())
    }

    /// Windows from the series ends backwards; series too short to leave a
    /// seasonal pair before the first target are skipped with a warning.
    pub fn windows(&self) -> Vec<Window<'_>> {
        let stride = self.stride.unwrap_or(self.horizon);
        let mut out = Vec::new();
        for s in &self.series {
            let m = self.m_seas.unwrap_or_else(|| seasonality(&s.freq));
            for w in 0..self.windows {
                let back = self.horizon + w * stride;
                if s.len() < back + m + 1 {
                    log::warn!("series {} too short for window {w} of task {}", s.id, self.name);
                    break;
                }
                out.push(Window {
                    series: s,
                    origin: s.len() - back,
                    m_seas: m,
                });
            }
        }
        out
    }
}

/// The four scores of a task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub mase: f64,
    pub crps: f64,
    pub mse: f64,
    pub mae: f64,
}

impl Scores {
    fn ratio(&self, base: &Scores) -> Scores {
        Scores {
            mase: self.mase / base.mase,
            crps: self.crps / base.crps,
            mse: self.mse / base.mse,
            mae: self.mae / base.mae,
        }
    }

    fn get(&self, metric: &str) -> f64 {
        match metric {
            "mase" => self.mase,
            "crps" => self.crps,
            "mse" => self.mse,
            _ => self.mae,
        }
    }
}

const METRICS: [&str; 4] = ["mase", "crps", "mse", "mae"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    pub task: String,
    pub windows: usize,
    pub raw: Scores,
    pub baseline: Scores,
    /// `raw / baseline` per metric.
    pub normalized: Scores,
}

/// A task/metric left out of the aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Degenerate {
    pub task: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub forecaster: String,
    pub baseline: String,
    pub tasks: Vec<TaskScore>,
    /// Geometric means of the normalized scores; `None` when no task qualifies.
    pub aggregate: AggregateScores,
    pub degenerate: Vec<Degenerate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateScores {
    pub mase: Option<f64>,
    pub crps: Option<f64>,
    pub mse: Option<f64>,
    pub mae: Option<f64>,
}

/// Per-window MASE/MSE/MAE are averaged; CRPS pools loss and `Σ|y|` over
/// all windows of the task.
pub fn score_task(f: &dyn Forecaster, task: &EvalTask) -> Result<(Scores, usize)> {
    task.validate()?;
    let windows = task.windows();
    if windows.is_empty() {
        return Err(Error::arg(format!("task {} has no usable window", task.name)));
    }
    let per: Vec<Result<(f64, f64, f64, f64, f64, usize)>> = windows
        .par_iter()
        .map(|w| {
            let s = w.series;
            let start = task.context.map_or(0, |c| w.origin.saturating_sub(c));
            let (ctx, cmask) = (&s.values[start..w.origin], &s.mask[start..w.origin]);
            let end = w.origin + task.horizon;
            let (tgt, tmask) = (&s.values[w.origin..end], &s.mask[w.origin..end]);
            let p = f.predict(ctx, cmask, task.horizon, w.m_seas)?;
            let hist = (&s.values[..w.origin], &s.mask[..w.origin]);
            let mase = mase_masked(&p.point, tgt, Some(tmask), hist.0, Some(hist.1), w.m_seas)?;
            let mse = mse_masked(&p.point, tgt, Some(tmask))?;
            let mae = mae_masked(&p.point, tgt, Some(tmask))?;
            let (loss, abs, n) = quantile_loss_parts(&p.quantiles, tgt, Some(tmask), &p.levels)?;
            Ok((mase, mse, mae, loss, abs, n))
        })
        .collect();
    let mut acc = (0.0, 0.0, 0.0, 0.0, 0.0, 0usize);
    for r in per {
        let (a, b, c, l, y, n) = r?;
        acc = (acc.0 + a, acc.1 + b, acc.2 + c, acc.3 + l, acc.4 + y, acc.5 + n);
    }
    let nw = windows.len() as f64;
    let crps = crps_from_parts(acc.3, acc.4, acc.5);
    Ok((
        Scores {
            mase: acc.0 / nw,
            crps: crps.value,
            mse: acc.1 / nw,
            mae: acc.2 / nw,
        },
        windows.len(),
    ))
}

pub fn evaluate(f: &dyn Forecaster, baseline: &dyn Forecaster, tasks: &[EvalTask]) -> Result<ScoreReport> {
    let mut rows = Vec::with_capacity(tasks.len());
    for task in tasks {
        let (raw, windows) = score_task(f, task)?;
        let (base, _) = score_task(baseline, task)?;
        rows.push(TaskScore {
            task: task.name.clone(),
            windows,
            raw,
            baseline: base,
            normalized: raw.ratio(&base),
        });
    }
    let mut degenerate = Vec::new();
    let mut agg = [None; 4];
    for (slot, metric) in agg.iter_mut().zip(METRICS) {
        let mut good = Vec::new();
        for r in &rows {
            let v = r.normalized.get(metric);
            if v.is_finite() && v > 0.0 {
                good.push(v);
            } else {
                log::warn!("task {} {metric} = {v}; excluded from aggregate", r.task);
                degenerate.push(Degenerate {
                    task: r.task.clone(),
                    metric: metric.into(),
                    value: v,
                });
            }
        }
        *slot = if good.is_empty() { None } else { Some(aggregate(&good)?) };
    }
    Ok(ScoreReport {
        forecaster: f.name(),
        baseline: baseline.name(),
        tasks: rows,
        aggregate: AggregateScores {
            mase: agg[0],
            crps: agg[1],
            mse: agg[2],
            mae: agg[3],
        },
        degenerate,
    })
}

impl ScoreReport {
    /// One row per task and forecaster, raw and normalized scores side by side.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "forecaster", "task", "windows", "mase", "crps", "mse", "mae", "norm_mase", "norm_crps", "norm_mse",
            "norm_mae",
        ])?;
        for r in &self.tasks {
            let mut rec = vec![self.forecaster.clone(), r.task.clone(), r.windows.to_string()];
            rec.extend(METRICS.iter().map(|m| r.raw.get(m).to_string()));
            rec.extend(METRICS.iter().map(|m| r.normalized.get(m).to_string()));
            out.write_record(&rec)?;
        }
        let a = &self.aggregate;
        let fmt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        let mut rec = vec![self.forecaster.clone(), "geometric_mean".into(), String::new()];
        rec.extend(std::iter::repeat_n(String::new(), 4));
        rec.extend([fmt(a.mase), fmt(a.crps), fmt(a.mse), fmt(a.mae)]);
        out.write_record(&rec)?;
        out.flush()?;
        Ok(())
    }
}
