//! AdamW with per-group learning rates and a linear decay schedule.

use crate::error::{Error, Result};
use crate::numerics::{Gradients, ParamGroup, ParamStore, Tensor};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub base_lr: f64,
    /// Learning rate of the rotary modulation networks.
    pub iarope_lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip; 0 disables.
    pub clip_norm: f64,
    pub batch_size: usize,
    pub total_steps: u64,
    pub seed: u64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            base_lr: 1e-3,
            iarope_lr: 1e-5,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 1.0,
            batch_size: 16,
            total_steps: 1000,
            seed: 0,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr >= 0.0 && self.iarope_lr >= 0.0) {
            return Err(Error::config("learning rates must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("betas must lie in [0, 1)"));
        }
        if !(self.eps > 0.0) || !(self.weight_decay >= 0.0) || !(self.clip_norm >= 0.0) {
            return Err(Error::config("eps must be positive; weight_decay and clip_norm non-negative"));
        }
        if self.batch_size == 0 || self.total_steps == 0 {
            return Err(Error::config("batch_size and total_steps must be at least 1"));
        }
        Ok(())
    }

    pub fn group_lr(&self, group: ParamGroup) -> f64 {
        match group {
            ParamGroup::Base => self.base_lr,
            ParamGroup::Iarope => self.iarope_lr,
        }
    }
}

/// `lr0 · (1 − step / total)`, zero from `step = total` on.
pub fn linear_decay(lr0: f64, step: u64, total: u64) -> f64 {
    if step >= total {
        return 0.0;
    }
    lr0 * (1.0 - step as f64 / total as f64)
}

/// Scale `grads` so their global norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if max_norm > 0.0 && norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

/// Adam moments with decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    /// Updates applied so far.
    pub t: u64,
}

impl AdamW {
    pub fn new(params: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = params.entries().iter().map(|e| Tensor::zeros(e.value.shape())).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    /// One update. `lr(group)` gives the current rate per group.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients, cfg: &OptimConfig, lr: impl Fn(ParamGroup) -> f64) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            let (group, decay) = {
                let e = params.entry(id);
                (e.group, e.decay)
            };
            let rate = lr(group);
            let i = id.index();
            let g = grads.get(id);
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let p = params.value_mut(id).data_mut();
            for j in 0..p.len() {
                let gj = g.map_or(0.0, |g| g.data()[j]);
                m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
                v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
                if decay {
                    p[j] -= rate * cfg.weight_decay * p[j];
                }
                let mh = m[j] / bc1;
                let vh = v[j] / bc2;
                p[j] -= rate * mh / (vh.sqrt() + cfg.eps);
            }
        }
    }
}
