//! Transformer building blocks recorded on a [`Tape`].

use crate::numerics::{ParamGroup, ParamId, ParamStore, Tape, Tensor, Var, LAYER_NORM_EPS};
use rand::Rng;

/// Additive attention mask value for excluded keys.
const MASKED: f64 = -1e30;

#[derive(Debug, Clone, PartialEq)]
pub struct Norm {
    pub gain: ParamId,
    pub offset: ParamId,
}

impl Norm {
    pub fn new(name: &str, d: usize, params: &mut ParamStore) -> Self {
        Self {
            gain: params.add(format!("{name}.gain"), Tensor::filled(&[d], 1.0), ParamGroup::Base, false),
            offset: params.add(format!("{name}.offset"), Tensor::zeros(&[d]), ParamGroup::Base, false),
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let n = tape.layer_norm(x, LAYER_NORM_EPS);
        let g = tape.param(self.gain);
        let b = tape.param(self.offset);
        let n = tape.mul_row(n, g);
        tape.add_row(n, b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(name: &str, d_in: usize, d_out: usize, params: &mut ParamStore, rng: &mut impl Rng) -> Self {
        Self {
            w: params.add_uniform(format!("{name}.w"), &[d_in, d_out], d_in, ParamGroup::Base, rng),
            b: params.add(format!("{name}.b"), Tensor::zeros(&[d_out]), ParamGroup::Base, false),
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let w = tape.param(self.w);
        let b = tape.param(self.b);
        let y = tape.matmul(x, w);
        tape.add_row(y, b)
    }
}

/// Rotary frequencies and per-row positions for queries and keys.
#[derive(Debug, Clone, Copy)]
pub struct Rotary<'a> {
    pub theta: Var,
    pub positions: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attention {
    pub heads: usize,
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
}

impl Attention {
    pub fn new(name: &str, d: usize, heads: usize, params: &mut ParamStore, rng: &mut impl Rng) -> Self {
        let mut w = |s: &str| params.add_uniform(format!("{name}.{s}"), &[d, d], d, ParamGroup::Base, rng);
        Self {
            heads,
            wq: w("wq"),
            wk: w("wk"),
            wv: w("wv"),
            wo: w("wo"),
        }
    }

    /// Multi-head attention of `queries` over `keys`. `key_mask[j] = false`
    /// removes key `j`; `rope` rotates queries and keys when present.
    pub fn forward(
        &self,
        tape: &mut Tape,
        queries: Var,
        keys: Var,
        key_mask: Option<&[bool]>,
        rope: Option<Rotary>,
    ) -> Var {
        let (wq, wk, wv, wo) = (
            tape.param(self.wq),
            tape.param(self.wk),
            tape.param(self.wv),
            tape.param(self.wo),
        );
        let q = tape.matmul(queries, wq);
        let k = tape.matmul(keys, wk);
        let v = tape.matmul(keys, wv);
        let d = tape.value(q).cols();
        let dh = d / self.heads;
        let tq = tape.value(q).rows();
        let tk = tape.value(k).rows();
        let mask = key_mask.filter(|m| m.iter().any(|&o| !o)).map(|m| {
            assert_eq!(m.len(), tk, "key mask length");
            let row: Vec<f64> = m.iter().map(|&o| if o { 0.0 } else { MASKED }).collect();
            tape.constant(Tensor::matrix(tq, tk, row.repeat(tq)))
        });
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let mut qh = tape.slice_cols(q, h * dh, dh);
            let mut kh = tape.slice_cols(k, h * dh, dh);
            if let Some(r) = rope {
                qh = tape.rotate(qh, r.theta, r.positions);
                kh = tape.rotate(kh, r.theta, r.positions);
            }
            let vh = tape.slice_cols(v, h * dh, dh);
            let s = tape.matmul_nt(qh, kh);
            let mut s = tape.scale(s, scale);
            if let Some(m) = mask {
                s = tape.add(s, m);
            }
            let p = tape.softmax(s);
            outs.push(tape.matmul(p, vh));
        }
        let cat = if outs.len() == 1 { outs[0] } else { tape.concat_cols(&outs) };
        tape.matmul(cat, wo)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

impl FeedForward {
    pub fn new(name: &str, d: usize, d_ff: usize, params: &mut ParamStore, rng: &mut impl Rng) -> Self {
        Self {
            up: Linear::new(&format!("{name}.up"), d, d_ff, params, rng),
            down: Linear::new(&format!("{name}.down"), d_ff, d, params, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let h = self.up.forward(tape, x);
        let h = tape.gelu(h);
        self.down.forward(tape, h)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub norm1: Norm,
    pub attn: Attention,
    pub norm2: Norm,
    pub ff: FeedForward,
}

impl EncoderLayer {
    pub fn new(name: &str, d: usize, heads: usize, d_ff: usize, params: &mut ParamStore, rng: &mut impl Rng) -> Self {
        Self {
            norm1: Norm::new(&format!("{name}.norm1"), d, params),
            attn: Attention::new(&format!("{name}.attn"), d, heads, params, rng),
            norm2: Norm::new(&format!("{name}.norm2"), d, params),
            ff: FeedForward::new(&format!("{name}.ff"), d, d_ff, params, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var, key_mask: &[bool], rope: Rotary) -> Var {
        let n = self.norm1.forward(tape, x);
        let a = self.attn.forward(tape, n, n, Some(key_mask), Some(rope));
        let x = tape.add(x, a);
        let n = self.norm2.forward(tape, x);
        let f = self.ff.forward(tape, n);
        tape.add(x, f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderLayer {
    pub norm1: Norm,
    pub self_attn: Attention,
    pub norm2: Norm,
    pub cross_attn: Attention,
    pub norm3: Norm,
    pub ff: FeedForward,
}

impl DecoderLayer {
    pub fn new(name: &str, d: usize, heads: usize, d_ff: usize, params: &mut ParamStore, rng: &mut impl Rng) -> Self {
        Self {
            norm1: Norm::new(&format!("{name}.norm1"), d, params),
            self_attn: Attention::new(&format!("{name}.self_attn"), d, heads, params, rng),
            norm2: Norm::new(&format!("{name}.norm2"), d, params),
            cross_attn: Attention::new(&format!("{name}.cross_attn"), d, heads, params, rng),
            norm3: Norm::new(&format!("{name}.norm3"), d, params),
            ff: FeedForward::new(&format!("{name}.ff"), d, d_ff, params, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var, memory: Var, memory_mask: &[bool]) -> Var {
        let n = self.norm1.forward(tape, x);
        let a = self.self_attn.forward(tape, n, n, None, None);
        let x = tape.add(x, a);
        let n = self.norm2.forward(tape, x);
        let c = self.cross_attn.forward(tape, n, memory, Some(memory_mask), None);
        let x = tape.add(x, c);
        let n = self.norm3.forward(tape, x);
        let f = self.ff.forward(tape, n);
        tape.add(x, f)
    }
}

/// Residual feed-forward head `gelu(x W₁ + b₁) W₂ + b₂ + x W_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualHead {
    pub hidden: Linear,
    pub out: Linear,
    pub skip: ParamId,
}

impl ResidualHead {
    pub fn new(name: &str, d: usize, d_ff: usize, d_out: usize, params: &mut ParamStore, rng: &mut impl Rng) -> Self {
        Self {
            hidden: Linear::new(&format!("{name}.hidden"), d, d_ff, params, rng),
            out: Linear::new(&format!("{name}.out"), d_ff, d_out, params, rng),
            skip: params.add_uniform(format!("{name}.skip"), &[d, d_out], d, ParamGroup::Base, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let h = self.hidden.forward(tape, x);
        let h = tape.gelu(h);
        let y = self.out.forward(tape, h);
        let s = tape.param(self.skip);
        let r = tape.matmul(x, s);
        tape.add(y, r)
    }
}
