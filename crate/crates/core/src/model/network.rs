//! The encoder–decoder forecaster.

use crate::error::{Error, Result};
use crate::iarope::{base_frequencies, fft_amplitudes, theta_node, Modulation, ModulationNet};
use crate::model::config::ModelConfig;
use crate::model::layers::{DecoderLayer, EncoderLayer, Norm, ResidualHead, Rotary};
use crate::model::rollout::{rollout, PassPredictor, QuantileForecast, Standardization};
use crate::mosdp::{RoutingDecision, TokenSequence, Tokenizer};
use crate::numerics::{ParamGroup, ParamId, ParamStore, Precision, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Where the per-layer `(γ, β)` come from in a forward pass.
#[derive(Debug, Clone, Copy)]
pub enum ModulationSource<'a> {
    /// Computed from the instance (or identity when the model is fixed).
    Instance,
    /// `γ = 1, β = 0` in every layer.
    Fixed,
    /// Externally supplied, one per encoder layer.
    Given(&'a [Modulation]),
}

/// Nodes of one forward pass.
#[derive(Debug, Clone)]
pub struct PassGraph {
    /// `pass_len × levels` standardized quantiles.
    pub quantiles: Var,
    pub tokens: TokenSequence,
    /// `θ′` per encoder layer.
    pub thetas: Vec<Var>,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub cfg: ModelConfig,
    pub params: ParamStore,
    pub tokenizer: Tokenizer,
    pub modulation: ModulationNet,
    pub encoder: Vec<EncoderLayer>,
    pub encoder_norm: Norm,
    pub decoder: Vec<DecoderLayer>,
    pub decoder_norm: Norm,
    pub forecast_tokens: ParamId,
    pub head: ResidualHead,
    pub precision: Precision,
    theta_init: Vec<f64>,
}

impl Model {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::with_rng(cfg, &mut rng)
    }

    pub fn with_rng(cfg: ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d_model;
        let mut params = ParamStore::new();
        let tokenizer = Tokenizer::new(cfg.patch.clone(), d, cfg.d_expert, &mut params, rng)?;
        let modulation = ModulationNet::new(cfg.iarope.clone(), cfg.head_dim(), cfg.encoder_layers, &mut params, rng)?;
        let encoder = (0..cfg.encoder_layers)
            .map(|l| EncoderLayer::new(&format!("encoder{l}"), d, cfg.heads, cfg.d_ff, &mut params, rng))
            .collect();
        let encoder_norm = Norm::new("encoder.norm", d, &mut params);
        let decoder = (0..cfg.decoder_layers)
            .map(|l| DecoderLayer::new(&format!("decoder{l}"), d, cfg.heads, cfg.d_ff, &mut params, rng))
            .collect();
        let decoder_norm = Norm::new("decoder.norm", d, &mut params);
        let tokens: Vec<f64> = (0..cfg.forecast_tokens * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let forecast_tokens = params.add(
            "decoder.forecast_tokens",
            Tensor::matrix(cfg.forecast_tokens, d, tokens),
            ParamGroup::Base,
            false,
        );
        let out = cfg.token_span * cfg.quantile_levels.len();
        let head = ResidualHead::new("head", d, cfg.d_ff, out, &mut params, rng);
        let theta_init = base_frequencies(cfg.head_dim(), cfg.iarope.base)?;
        Ok(Self {
            cfg,
            params,
            tokenizer,
            modulation,
            encoder,
            encoder_norm,
            decoder,
            decoder_norm,
            forecast_tokens,
            head,
            precision: Precision::F64,
            theta_init,
        })
    }

    pub fn theta_init(&self) -> &[f64] {
        &self.theta_init
    }

    pub fn tape(&self) -> Tape<'_> {
        Tape::with_precision(&self.params, self.precision)
    }

    /// One pass over a standardized context (at most `cfg.context` steps).
    pub fn forward(
        &self,
        tape: &mut Tape,
        context: &[f64],
        observed: &[bool],
        source: ModulationSource,
    ) -> Result<PassGraph> {
        let tokens = self.tokenizer.tokenize_series(tape, context, observed)?;
        if tokens.is_empty() {
            return Err(Error::EmptyTokens);
        }
        let positions = tokens.positions();
        let key_mask = tokens.key_mask();
        let thetas = self.thetas(tape, context, observed, source)?;

        let mut x = tokens.embeddings;
        for (layer, &theta) in self.encoder.iter().zip(&thetas) {
            let rope = Rotary {
                theta,
                positions: &positions,
            };
            x = layer.forward(tape, x, &key_mask, rope);
        }
        let memory = self.encoder_norm.forward(tape, x);

        let mut q = tape.param(self.forecast_tokens);
        for layer in &self.decoder {
            q = layer.forward(tape, q, memory, &key_mask);
        }
        let q = self.decoder_norm.forward(tape, q);
        let out = self.head.forward(tape, q);
        let quantiles = tape.reshape(out, &[self.cfg.pass_len(), self.cfg.quantile_levels.len()]);
        Ok(PassGraph {
            quantiles,
            tokens,
            thetas,
        })
    }

    fn thetas(&self, tape: &mut Tape, context: &[f64], observed: &[bool], source: ModulationSource) -> Result<Vec<Var>> {
        let layers = self.cfg.encoder_layers;
        let half = self.cfg.head_dim() / 2;
        let space = self.cfg.iarope.space;
        let constant_pair = |tape: &mut Tape, m: &Modulation| {
            let g = tape.constant(Tensor::row(m.gamma.clone()));
            let b = tape.constant(Tensor::row(m.beta.clone()));
            (g, b)
        };
        let pairs: Vec<(Var, Var)> = match source {
            ModulationSource::Instance if self.cfg.iarope.adaptive => {
                let amp = fft_amplitudes(context, observed, self.cfg.iarope.fft_dim)?;
                let f = self.modulation.features(tape, &amp);
                (0..layers).map(|l| self.modulation.modulate(tape, f, l)).collect()
            }
            ModulationSource::Instance | ModulationSource::Fixed => {
                let id = Modulation::identity(half);
                (0..layers).map(|_| constant_pair(tape, &id)).collect()
            }
            ModulationSource::Given(mods) => {
                if mods.len() != layers || mods.iter().any(|m| m.gamma.len() != half || m.beta.len() != half) {
                    return Err(Error::Shape(format!(
                        "expected {layers} modulations of width {half}"
                    )));
                }
                mods.iter().map(|m| constant_pair(tape, m)).collect()
            }
        };
        Ok(pairs
            .into_iter()
            .map(|(g, b)| theta_node(tape, &self.theta_init, g, b, space))
            .collect())
    }

    /// The instance's own `(γ, β)` for a standardized context.
    pub fn modulations(&self, context: &[f64], observed: &[bool]) -> Result<Vec<Modulation>> {
        self.modulation.evaluate(&self.params, context, observed)
    }

    /// Standardize and trim a raw history the way a forecast pass sees it.
    pub fn prepare_context(&self, values: &[f64], observed: &[bool]) -> Result<(Vec<f64>, Vec<bool>)> {
        let stats = Standardization::fit(values, observed, self.cfg.std_floor)?;
        let start = values.len().saturating_sub(self.cfg.context);
        Ok((
            stats.apply_masked(&values[start..], &observed[start..]),
            observed[start..].to_vec(),
        ))
    }

    /// Routing decisions for the first pass over a raw history.
    pub fn routing(&self, values: &[f64], observed: &[bool]) -> Result<Vec<RoutingDecision>> {
        let (ctx, obs) = self.prepare_context(values, observed)?;
        let mut tape = self.tape();
        Ok(self.tokenizer.tokenize_series(&mut tape, &ctx, &obs)?.decisions)
    }

    pub fn predictor<'a>(&'a self, source: ModulationSource<'a>) -> ModelPredictor<'a> {
        ModelPredictor { model: self, source }
    }

    pub fn forecast(&self, values: &[f64], observed: &[bool], horizon: usize) -> Result<QuantileForecast> {
        rollout(&self.predictor(ModulationSource::Instance), values, observed, horizon)
    }

    pub fn forecast_with(
        &self,
        values: &[f64],
        observed: &[bool],
        horizon: usize,
        source: ModulationSource,
    ) -> Result<QuantileForecast> {
        rollout(&self.predictor(source), values, observed, horizon)
    }
}

/// A model bound to a modulation source, usable by [`rollout`].
pub struct ModelPredictor<'a> {
    model: &'a Model,
    source: ModulationSource<'a>,
}

impl PassPredictor for ModelPredictor<'_> {
    fn pass_len(&self) -> usize {
        self.model.cfg.pass_len()
    }

    fn levels(&self) -> &[f64] {
        &self.model.cfg.quantile_levels
    }

    fn max_context(&self) -> usize {
        self.model.cfg.context
    }

    fn std_floor(&self) -> f64 {
        self.model.cfg.std_floor
    }

    fn predict_pass(&self, context: &[f64], observed: &[bool]) -> Result<Vec<f64>> {
        let mut tape = self.model.tape();
        let g = self.model.forward(&mut tape, context, observed, self.source)?;
        Ok(tape.value(g.quantiles).data().to_vec())
    }
}
