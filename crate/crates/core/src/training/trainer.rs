//! The training loop: per-example tapes, ordered gradient reduction, AdamW,
//! then one router-bias balancing update per batch.

use crate::data::{Corpus, CorpusSampler, Example};
use crate::error::{Error, Result};
use crate::model::{Checkpoint, Model, ModulationSource, Standardization};
use crate::mosdp::{accumulate_load, update_bias, RoutingDecision};
use crate::numerics::{Gradients, Tensor};
use crate::training::config::TrainConfig;
use crate::training::loss::horizon_weights;
use crate::training::optim::{clip_global_norm, linear_decay, AdamW};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// One line of the JSON-lines training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: u64,
    pub loss: f64,
    pub lr: f64,
    /// Share of the batch's routing load per expert (real, then null).
    pub expert_load: Vec<f64>,
}

/// Seed of the batch drawn at `step`.
pub fn batch_seed(seed: u64, step: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(seed ^ mix(step))
}

/// Loss, gradients and routing decisions of one example, scaled by `1/batch`.
pub fn example_gradients(
    model: &Model,
    ex: &Example,
    cfg: &TrainConfig,
    batch: usize,
) -> Result<(f64, Gradients, Vec<RoutingDecision>)> {
    let h = model.cfg.pass_len();
    if ex.target.len() != h || ex.target_mask.len() != h {
        return Err(Error::Shape(format!(
            "target of {} steps, model pass is {h}",
            ex.target.len()
        )));
    }
    let stats = Standardization::fit(&ex.context, &ex.context_mask, model.cfg.std_floor)?;
    let (ctx, obs) = model.prepare_context(&ex.context, &ex.context_mask)?;
    let k = cfg.loss.levels.len() as f64;
    let omega = horizon_weights(h, cfg.loss.weight_floor);
    let targets: Vec<f64> = ex
        .target
        .iter()
        .zip(&ex.target_mask)
        .map(|(&y, &m)| if m { stats.apply(y) } else { 0.0 })
        .collect();
    let weights: Vec<f64> = omega
        .iter()
        .zip(&ex.target_mask)
        .map(|(&w, &m)| if m { w / k / batch as f64 } else { 0.0 })
        .collect();

    let mut tape = model.tape();
    let g = model.forward(&mut tape, &ctx, &obs, ModulationSource::Instance)?;
    let loss = tape.pinball(g.quantiles, &targets, &weights, &cfg.loss.levels);
    let grads = tape.backward(loss)?;
    Ok((tape.scalar(loss), grads, g.tokens.decisions))
}

#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: Model,
    pub optimizer: AdamW,
    pub cfg: TrainConfig,
    /// Completed optimizer steps.
    pub step: u64,
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let model = Model::new(cfg.model.clone(), cfg.optim.seed)?;
        Ok(Self::with_model(model, cfg))
    }

    /// Fresh optimizer state around an existing model.
    pub fn with_model(model: Model, cfg: TrainConfig) -> Self {
        let optimizer = AdamW::new(&model.params);
        Self {
            model,
            optimizer,
            cfg,
            step: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        linear_decay(self.cfg.optim.base_lr, self.step, self.cfg.optim.total_steps)
    }

    /// Forward, loss, gradients, clipped AdamW update, then bias balancing.
    pub fn train_step(&mut self, batch: &[Example], seed: u64) -> Result<StepReport> {
        if batch.is_empty() {
            return Err(Error::arg("empty batch"));
        }
        let b = batch.len();
        let per_example: Vec<Result<(f64, Gradients, Vec<RoutingDecision>)>> = {
            let (model, cfg) = (&self.model, &self.cfg);
            batch.par_iter().map(|ex| example_gradients(model, ex, cfg, b)).collect()
        };
        let mut loss = 0.0;
        let mut grads = Gradients::empty(self.model.params.len());
        let mut decisions = Vec::new();
        for r in per_example {
            let (l, g, d) = r?;
            loss += l;
            grads.add(&g);
            decisions.extend(d);
        }
        if !loss.is_finite() || !grads.global_norm().is_finite() {
            return Err(Error::NonFiniteLoss {
                step: self.step,
                batch_seed: seed,
            });
        }
        clip_global_norm(&mut grads, self.cfg.optim.clip_norm);

        let (step, total) = (self.step, self.cfg.optim.total_steps);
        let optim = &self.cfg.optim;
        self.optimizer
            .step(&mut self.model.params, &grads, optim, |g| linear_decay(optim.group_lr(g), step, total));

        let patch = &self.model.cfg.patch;
        let load = accumulate_load(decisions.iter(), patch);
        update_bias(&mut self.model.tokenizer.bias, &load, patch);
        let total_load: f64 = load.iter().sum();
        let expert_load = load
            .iter()
            .map(|&l| if total_load > 0.0 { l / total_load } else { 0.0 })
            .collect();

        let report = StepReport {
            step: self.step,
            loss,
            lr: linear_decay(optim.base_lr, step, total),
            expert_load,
        };
        self.step += 1;
        Ok(report)
    }

    /// The batch for the current step; depends only on the seed and step.
    pub fn draw_batch(&self, corpus: &Corpus, sampler: &CorpusSampler) -> Result<(Vec<Example>, u64)> {
        let seed = batch_seed(self.cfg.optim.seed, self.step);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batch = sampler.sample_batch(
            corpus,
            self.cfg.optim.batch_size,
            self.model.cfg.context,
            self.model.cfg.pass_len(),
            &mut rng,
        )?;
        Ok((batch, seed))
    }

    /// Train until `cfg.optim.total_steps`, logging JSON lines to `log` and
    /// calling `on_checkpoint` every `checkpoint_every` steps and at the end.
    pub fn fit(
        &mut self,
        corpus: &Corpus,
        mut log: Option<&mut dyn Write>,
        mut on_checkpoint: impl FnMut(&Trainer) -> Result<()>,
    ) -> Result<Vec<StepReport>> {
        let sampler = self.cfg.sampler.clone();
        let mut reports = Vec::new();
        while self.step < self.cfg.optim.total_steps {
            let (batch, seed) = self.draw_batch(corpus, &sampler)?;
            let r = self.train_step(&batch, seed)?;
            if let Some(w) = log.as_deref_mut() {
                if self.cfg.log_every > 0 && r.step % self.cfg.log_every == 0 {
                    serde_json::to_writer(&mut *w, &r)?;
                    w.write_all(b"\n")?;
                }
            }
            reports.push(r);
            let every = self.cfg.checkpoint_every;
            if every > 0 && self.step.is_multiple_of(every) && self.step < self.cfg.optim.total_steps {
                on_checkpoint(self)?;
            }
        }
        on_checkpoint(self)?;
        Ok(reports)
    }

    /// Model, router biases, Adam moments and run state.
    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = Checkpoint::from_model(&self.model);
        for (e, (m, v)) in self
            .model
            .params
            .entries()
            .iter()
            .zip(self.optimizer.m.iter().zip(&self.optimizer.v))
        {
            ck.push(format!("adam.m/{}", e.name), m.clone());
            ck.push(format!("adam.v/{}", e.name), v.clone());
        }
        ck.meta = serde_json::json!({
            "step": self.step,
            "adam_t": self.optimizer.t,
            "train": self.cfg,
        });
        Ok(ck)
    }

    /// Rebuild a trainer from [`Trainer::checkpoint`] output.
    pub fn resume(ck: &Checkpoint) -> Result<Self> {
        let model = ck.to_model()?;
        let meta = &ck.meta;
        let missing = |k: &str| Error::Checkpoint(format!("missing meta field {k}"));
        let step = meta.get("step").and_then(|v| v.as_u64()).ok_or_else(|| missing("step"))?;
        let t = meta.get("adam_t").and_then(|v| v.as_u64()).ok_or_else(|| missing("adam_t"))?;
        let mut cfg: TrainConfig =
            serde_json::from_value(meta.get("train").cloned().ok_or_else(|| missing("train"))?)?;
        cfg.model = model.cfg.clone();
        let mut optimizer = AdamW::new(&model.params);
        optimizer.t = t;
        for (i, e) in model.params.entries().iter().enumerate() {
            let get = |kind: &str| -> Result<Tensor> {
                let t = ck
                    .tensor(&format!("adam.{kind}/{}", e.name))
                    .ok_or_else(|| Error::Checkpoint(format!("missing adam.{kind} for {}", e.name)))?;
                if t.shape() != e.value.shape() {
                    return Err(Error::Checkpoint(format!("adam.{kind} shape for {}", e.name)));
                }
                Ok(t.clone())
            };
            optimizer.m[i] = get("m")?;
            optimizer.v[i] = get("v")?;
        }
        Ok(Self {
            model,
            optimizer,
            cfg,
            step,
        })
    }
}
