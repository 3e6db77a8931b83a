//! Real-input discrete Fourier transform on top of `rustfft`.

use crate::error::{Error, Result};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use std::cell::RefCell;

thread_local! {
    // plans are cached per length, so reuse one planner per thread
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// One-sided amplitude spectrum `|X_k|` for `k = 0..=L/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    amplitudes: Vec<f64>,
    signal_len: usize,
}

impl Spectrum {
    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    pub fn into_amplitudes(self) -> Vec<f64> {
        self.amplitudes
    }
}

/// Complex DFT bins `0..=L/2` of a real signal, as `(re, im)` pairs.
pub fn rfft(signal: &[f64]) -> Result<Vec<(f64, f64)>> {
    let n = signal.len();
    if n == 0 {
        return Err(Error::EmptySignal);
    }
    let mut buf: Vec<Complex<f64>> = signal.iter().map(|&x| Complex::new(x, 0.0)).collect();
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n));
    fft.process(&mut buf);
    Ok(buf[..n / 2 + 1].iter().map(|c| (c.re, c.im)).collect())
}

pub fn rfft_amplitude(signal: &[f64]) -> Result<Spectrum> {
    let bins = rfft(signal)?;
    Ok(Spectrum {
        amplitudes: bins.into_iter().map(|(re, im)| re.hypot(im)).collect(),
        signal_len: signal.len(),
    })
}
