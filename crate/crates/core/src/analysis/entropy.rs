//! Sliding-window spectral entropy as an information-density measure.

use crate::error::{Error, Result};
use crate::numerics::fft::rfft;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

/// `h[n] = 0.5 − 0.5 cos(2πn / (M−1))`.
pub fn hamming(m: usize) -> Result<Vec<f64>> {
    if m < 2 {
        return Err(Error::arg(format!("window length {m} < 2")));
    }
    let d = (m - 1) as f64;
    Ok((0..m).map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / d).cos()).collect())
}

/// Shannon entropy (bits) of the normalized one-sided periodogram of the
/// windowed segment. Bounded by `log2(M/2 + 1) ≤ log2 M`.
pub fn spectral_entropy(segment: &[f64], remove_mean: bool) -> Result<f64> {
    let h = hamming(segment.len())?;
    let mean = if remove_mean {
        segment.iter().sum::<f64>() / segment.len() as f64
    } else {
        0.0
    };
    let windowed: Vec<f64> = segment.iter().zip(&h).map(|(&x, &w)| (x - mean) * w).collect();
    let power: Vec<f64> = rfft(&windowed)?.into_iter().map(|(re, im)| re * re + im * im).collect();
    let total: f64 = power.iter().sum();
    if !(total > 0.0) {
        log::warn!("zero-energy segment; spectral entropy set to 0");
        return Ok(0.0);
    }
    Ok(power
        .iter()
        .map(|&p| p / total)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.log2())
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyConfig {
    pub window: usize,
    pub stride: usize,
    pub remove_mean: bool,
}

impl Default for EntropyConfig {
    fn default() -> Self {
        Self {
            window: 128,
            stride: 128,
            remove_mean: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyProfile {
    pub id: String,
    pub window: usize,
    pub stride: usize,
    /// `H_SE` per window, bits.
    pub entropies: Vec<f64>,
    pub mu_se: f64,
    /// Population standard deviation.
    pub sigma_se: f64,
}

/// `⌊(T−M)/stride⌋ + 1` windows starting at multiples of the stride.
pub fn profile(id: &str, series: &[f64], cfg: &EntropyConfig) -> Result<EntropyProfile> {
    let (m, s) = (cfg.window, cfg.stride);
    if s == 0 {
        return Err(Error::arg("stride must be at least 1"));
    }
    if series.len() < m {
        return Err(Error::arg(format!("series {id} of {} steps shorter than window {m}", series.len())));
    }
    let n = (series.len() - m) / s + 1;
    let entropies = (0..n)
        .map(|i| spectral_entropy(&series[i * s..i * s + m], cfg.remove_mean))
        .collect::<Result<Vec<_>>>()?;
    let mu = entropies.iter().sum::<f64>() / n as f64;
    let var = entropies.iter().map(|h| (h - mu).powi(2)).sum::<f64>() / n as f64;
    Ok(EntropyProfile {
        id: id.to_string(),
        window: m,
        stride: s,
        entropies,
        mu_se: mu,
        sigma_se: var.sqrt(),
    })
}

/// One CSV row per window: `id, window_index, start, entropy_bits`.
pub fn write_profiles_csv(profiles: &[EntropyProfile], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["id", "window_index", "start", "entropy_bits"])?;
    for p in profiles {
        for (i, h) in p.entropies.iter().enumerate() {
            out.write_record([p.id.clone(), i.to_string(), (i * p.stride).to_string(), h.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropySummary {
    pub id: String,
    pub windows: usize,
    pub mu_se: f64,
    pub sigma_se: f64,
}

impl From<&EntropyProfile> for EntropySummary {
    fn from(p: &EntropyProfile) -> Self {
        Self {
            id: p.id.clone(),
            windows: p.entropies.len(),
            mu_se: p.mu_se,
            sigma_se: p.sigma_se,
        }
    }
}
