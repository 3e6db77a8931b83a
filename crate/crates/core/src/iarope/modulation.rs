//! Instance features from the amplitude spectrum and the per-layer networks
//! that turn them into frequency modulations.

use crate::error::{Error, Result};
use crate::iarope::rope::ModulationSpace;
use crate::numerics::{layer_norm, rfft_amplitude, ParamGroup, ParamId, ParamStore, Tape, Tensor, Var, LAYER_NORM_EPS};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Low-frequency amplitudes of the masked series: the first `w` bins,
/// zero-padded when the series has fewer.
pub fn fft_amplitudes(values: &[f64], observed: &[bool], w: usize) -> Result<Vec<f64>> {
    if values.len() != observed.len() {
        return Err(Error::Shape("values and mask differ in length".into()));
    }
    let masked: Vec<f64> = values
        .iter()
        .zip(observed)
        .map(|(&v, &o)| if o { v } else { 0.0 })
        .collect();
    let spectrum = rfft_amplitude(&masked)?;
    let mut out = vec![0.0; w];
    let n = w.min(spectrum.amplitudes().len());
    out[..n].copy_from_slice(&spectrum.amplitudes()[..n]);
    Ok(out)
}

/// [`fft_amplitudes`] followed by the feature layer norm.
pub fn extract_fft_features(values: &[f64], observed: &[bool], w: usize, gain: &[f64], offset: &[f64]) -> Result<Vec<f64>> {
    let amp = fft_amplitudes(values, observed, w)?;
    Ok(layer_norm(&amp, gain, offset, LAYER_NORM_EPS))
}

/// `(γ, β)` for one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Modulation {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl Modulation {
    pub fn identity(half: usize) -> Self {
        Self {
            gamma: vec![1.0; half],
            beta: vec![0.0; half],
        }
    }
}

/// JSON-lines export of one instance's modulations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulationRecord {
    pub id: String,
    pub layers: Vec<Modulation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IaropeConfig {
    /// Number of low-frequency bins fed to the networks.
    pub fft_dim: usize,
    pub hidden: usize,
    pub base: f64,
    pub space: ModulationSpace,
    /// `false` pins every layer to `γ = 1, β = 0`.
    pub adaptive: bool,
}

impl Default for IaropeConfig {
    fn default() -> Self {
        Self {
            fft_dim: 128,
            hidden: 64,
            base: 10000.0,
            space: ModulationSpace::Log,
            adaptive: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNet {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

/// Shared feature layer norm plus one MLP per transformer layer, producing
/// `D_h/2` scales and `D_h/2` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationNet {
    pub cfg: IaropeConfig,
    pub head_dim: usize,
    pub ln_gain: ParamId,
    pub ln_offset: ParamId,
    pub layers: Vec<LayerNet>,
}

impl ModulationNet {
    pub fn new(
        cfg: IaropeConfig,
        head_dim: usize,
        layers: usize,
        params: &mut ParamStore,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if cfg.fft_dim == 0 || cfg.hidden == 0 {
            return Err(Error::config("fft_dim and modulation hidden width must be positive"));
        }
        if !head_dim.is_multiple_of(2) {
            return Err(Error::config("rotary head dim must be even"));
        }
        let w = cfg.fft_dim;
        let g = ParamGroup::Iarope;
        let ln_gain = params.add("iarope.ln.gain", Tensor::filled(&[w], 1.0), g, false);
        let ln_offset = params.add("iarope.ln.offset", Tensor::zeros(&[w]), g, false);
        let layers = (0..layers)
            .map(|l| LayerNet {
                w1: params.add_uniform(format!("iarope.layer{l}.w1"), &[w, cfg.hidden], w, g, rng),
                b1: params.add(format!("iarope.layer{l}.b1"), Tensor::zeros(&[cfg.hidden]), g, false),
                // zero output layer: identity modulation at initialization
                w2: params.add(format!("iarope.layer{l}.w2"), Tensor::zeros(&[cfg.hidden, head_dim]), g, true),
                b2: params.add(format!("iarope.layer{l}.b2"), Tensor::zeros(&[head_dim]), g, false),
            })
            .collect();
        Ok(Self {
            cfg,
            head_dim,
            ln_gain,
            ln_offset,
            layers,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Normalized features as a `1 × w` node; the amplitudes themselves are
    /// data and carry no gradient.
    pub fn features(&self, tape: &mut Tape, amplitudes: &[f64]) -> Var {
        let x = tape.constant(Tensor::row(amplitudes.to_vec()));
        let x = tape.layer_norm(x, LAYER_NORM_EPS);
        let g = tape.param(self.ln_gain);
        let b = tape.param(self.ln_offset);
        let x = tape.mul_row(x, g);
        tape.add_row(x, b)
    }

    /// `(γ, β)` nodes (each `1 × D_h/2`) for layer `l`.
    pub fn modulate(&self, tape: &mut Tape, features: Var, l: usize) -> (Var, Var) {
        let net = &self.layers[l];
        let (w1, b1, w2, b2) = (tape.param(net.w1), tape.param(net.b1), tape.param(net.w2), tape.param(net.b2));
        let h = tape.matmul(features, w1);
        let h = tape.add_row(h, b1);
        let h = tape.gelu(h);
        let raw = tape.matmul(h, w2);
        let raw = tape.add_row(raw, b2);
        let half = self.head_dim / 2;
        let gamma = tape.slice_cols(raw, 0, half);
        let gamma = tape.add_scalar(gamma, 1.0);
        let beta = tape.slice_cols(raw, half, half);
        (gamma, beta)
    }

    /// Plain-value modulations for every layer.
    pub fn evaluate(&self, params: &ParamStore, values: &[f64], observed: &[bool]) -> Result<Vec<Modulation>> {
        let half = self.head_dim / 2;
        if !self.cfg.adaptive {
            return Ok(vec![Modulation::identity(half); self.layers.len()]);
        }
        let amp = fft_amplitudes(values, observed, self.cfg.fft_dim)?;
        let mut tape = Tape::new(params);
        let f = self.features(&mut tape, &amp);
        Ok((0..self.layers.len())
            .map(|l| {
                let (g, b) = self.modulate(&mut tape, f, l);
                Modulation {
                    gamma: tape.value(g).data().to_vec(),
                    beta: tape.value(b).data().to_vec(),
                }
            })
            .collect())
    }
}

/// `θ′` as a `1 × D_h/2` node, computed with the same arithmetic as
/// [`crate::iarope::adapt_frequencies`].
pub fn theta_node(tape: &mut Tape, theta_init: &[f64], gamma: Var, beta: Var, space: ModulationSpace) -> Var {
    match space {
        ModulationSpace::Log => {
            let ln = tape.constant(Tensor::row(theta_init.iter().map(|t| t.ln()).collect()));
            let th = tape.constant(Tensor::row(theta_init.to_vec()));
            let scaled = tape.mul(gamma, ln);
            let delta = tape.sub(scaled, ln);
            let shifted = tape.add(delta, beta);
            let factor = tape.exp(shifted);
            tape.mul(th, factor)
        }
        ModulationSpace::Linear => {
            let th = tape.constant(Tensor::row(theta_init.to_vec()));
            let scaled = tape.mul(gamma, th);
            tape.add(scaled, beta)
        }
    }
}
