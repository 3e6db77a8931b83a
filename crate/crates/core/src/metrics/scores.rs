//! Point and quantile scores. Masked variants skip unobserved target points;
//! the MASE scale uses only seasonal pairs with both ends observed.

use crate::error::{Error, Result};
use crate::training::loss::pinball;

/// `ŷ_{T+h} = y_{T+h−m⌈h/m⌉}`; falls back to last-value repetition when the
/// context is shorter than `m`.
pub fn seasonal_naive(context: &[f64], m: usize, horizon: usize) -> Result<Vec<f64>> {
    if context.is_empty() {
        return Err(Error::EmptySignal);
    }
    let t = context.len();
    let m = if m == 0 || t < m {
        log::warn!("context of {t} shorter than season {m}; using last-value naive");
        1
    } else {
        m
    };
    Ok((1..=horizon)
        .map(|h| context[t - 1 + h - m * h.div_ceil(m)])
        .collect())
}

fn check_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("{what}: {a} vs {b}")));
    }
    Ok(())
}

fn observed<'a>(mask: Option<&'a [bool]>, n: usize) -> impl Fn(usize) -> bool + 'a {
    move |i| mask.is_none_or(|m| i < n && m[i])
}

fn mean_over(target_mask: Option<&[bool]>, n: usize, f: impl Fn(usize) -> f64) -> Result<f64> {
    let obs = observed(target_mask, n);
    let (mut s, mut c) = (0.0, 0usize);
    for i in (0..n).filter(|&i| obs(i)) {
        s += f(i);
        c += 1;
    }
    if c == 0 {
        return Err(Error::EmptySignal);
    }
    Ok(s / c as f64)
}

pub fn mse(forecast: &[f64], target: &[f64]) -> Result<f64> {
    mse_masked(forecast, target, None)
}

pub fn mse_masked(forecast: &[f64], target: &[f64], mask: Option<&[bool]>) -> Result<f64> {
    check_len(forecast.len(), target.len(), "forecast vs target")?;
    mean_over(mask, target.len(), |i| (target[i] - forecast[i]).powi(2))
}

pub fn mae(forecast: &[f64], target: &[f64]) -> Result<f64> {
    mae_masked(forecast, target, None)
}

pub fn mae_masked(forecast: &[f64], target: &[f64], mask: Option<&[bool]>) -> Result<f64> {
    check_len(forecast.len(), target.len(), "forecast vs target")?;
    mean_over(mask, target.len(), |i| (target[i] - forecast[i]).abs())
}

/// In-sample seasonal-naive MAE, `(1/(T−m)) Σ |y_t − y_{t−m}|`.
pub fn seasonal_scale(context: &[f64], mask: Option<&[bool]>, m: usize) -> Result<f64> {
    let m = m.max(1);
    if context.len() <= m {
        return Err(Error::arg(format!("context of {} too short for season {m}", context.len())));
    }
    let obs = observed(mask, context.len());
    let (mut s, mut c) = (0.0, 0usize);
    for t in m..context.len() {
        if obs(t) && obs(t - m) {
            s += (context[t] - context[t - m]).abs();
            c += 1;
        }
    }
    if c == 0 {
        return Err(Error::arg("no observed seasonal pair in context"));
    }
    Ok(s / c as f64)
}

/// MAE over the target divided by the in-sample seasonal-naive MAE. A zero
/// scale yields `+∞` (or NaN when the error is also zero); callers treat
/// non-finite values as degenerate.
pub fn mase(forecast: &[f64], target: &[f64], context: &[f64], m: usize) -> Result<f64> {
    mase_masked(forecast, target, None, context, None, m)
}

pub fn mase_masked(
    forecast: &[f64],
    target: &[f64],
    target_mask: Option<&[bool]>,
    context: &[f64],
    context_mask: Option<&[bool]>,
    m: usize,
) -> Result<f64> {
    let err = mae_masked(forecast, target, target_mask)?;
    let scale = seasonal_scale(context, context_mask, m)?;
    if scale == 0.0 {
        log::warn!("zero seasonal-naive scale; MASE is degenerate");
    }
    Ok(err / scale)
}

/// Weighted quantile loss and `Σ|y|` over observed points; the pieces of
/// [`crps_quantile`], kept separate so windows can be pooled.
pub fn quantile_loss_parts(
    quantiles: &[f64],
    target: &[f64],
    mask: Option<&[bool]>,
    levels: &[f64],
) -> Result<(f64, f64, usize)> {
    let k = levels.len();
    if k == 0 {
        return Err(Error::arg("no quantile levels"));
    }
    check_len(quantiles.len(), target.len() * k, "quantiles vs target × levels")?;
    let obs = observed(mask, target.len());
    let (mut loss, mut abs, mut n) = (0.0, 0.0, 0usize);
    for t in (0..target.len()).filter(|&t| obs(t)) {
        let y = target[t];
        let row = &quantiles[t * k..(t + 1) * k];
        loss += 2.0 / k as f64 * row.iter().zip(levels).map(|(&q, &a)| pinball(y, q, a)).sum::<f64>();
        abs += y.abs();
        n += 1;
    }
    Ok((loss, abs, n))
}

/// Quantile CRPS approximation and whether it was normalized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crps {
    pub value: f64,
    /// False when all targets are zero and the raw mean loss is reported.
    pub normalized: bool,
}

/// `mean_t (2/K) Σ_k L_{α_k}(y_t, q_t(α_k))` divided by `mean_t |y_t|`.
/// `quantiles` is `H × K` row-major.
pub fn crps_quantile(quantiles: &[f64], target: &[f64], levels: &[f64]) -> Result<Crps> {
    crps_quantile_masked(quantiles, target, None, levels)
}

pub fn crps_quantile_masked(quantiles: &[f64], target: &[f64], mask: Option<&[bool]>, levels: &[f64]) -> Result<Crps> {
    let (loss, abs, n) = quantile_loss_parts(quantiles, target, mask, levels)?;
    if n == 0 {
        return Err(Error::EmptySignal);
    }
    Ok(crps_from_parts(loss, abs, n))
}

pub fn crps_from_parts(loss: f64, abs: f64, n: usize) -> Crps {
    if abs > 0.0 {
        Crps {
            value: loss / abs,
            normalized: true,
        }
    } else {
        log::warn!("all-zero targets; CRPS left unnormalized");
        Crps {
            value: loss / n as f64,
            normalized: false,
        }
    }
}

/// Geometric mean `exp(mean ln s)` of strictly positive finite scores.
pub fn aggregate(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::arg("no scores to aggregate"));
    }
    if let Some(bad) = scores.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
        return Err(Error::arg(format!("geometric mean needs positive finite scores, got {bad}")));
    }
    Ok((scores.iter().map(|s| s.ln()).sum::<f64>() / scores.len() as f64).exp())
}

/// Seasonal period by frequency tag; unknown tags get 1.
pub fn seasonality(freq: &str) -> usize {
    match freq.trim().to_ascii_lowercase().as_str() {
        "h" | "1h" | "hourly" | "hour" => 24,
        "15min" | "15t" | "15m" => 96,
        "10min" | "10t" | "10m" => 144,
        "d" | "1d" | "daily" | "day" => 7,
        "w" | "1w" | "weekly" | "week" => 52,
        _ => 1,
    }
}
