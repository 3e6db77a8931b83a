//! Multi-granularity fusion: per-size expert MLPs applied to ancestor slices,
//! mixed by the normalized router gates, concatenated into encoder tokens.

use crate::error::{Error, Result};
use crate::mosdp::config::{PatchConfig, SoftmaxScope};
use crate::mosdp::patchify::{patchify_coarsest, CoarsePatches};
use crate::mosdp::router::{decide, RouterState, RoutingDecision};
use crate::numerics::{ParamGroup, ParamId, ParamStore, Tape, Tensor, Var};
use rand::Rng;

/// One expert: `p_i → d_expert → D` with a GELU hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertMlp {
    pub size: usize,
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

impl ExpertMlp {
    fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let (w1, b1, w2, b2) = (
            tape.param(self.w1),
            tape.param(self.b1),
            tape.param(self.w2),
            tape.param(self.b2),
        );
        let h = tape.matmul(x, w1);
        let h = tape.add_row(h, b1);
        let h = tape.gelu(h);
        let o = tape.matmul(h, w2);
        tape.add_row(o, b2)
    }
}

/// Span of one token in the padded input, in time steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenSpan {
    pub start: usize,
    pub len: usize,
    /// No observed value inside the span; excluded from attention.
    pub padded: bool,
}

/// Encoder input produced by [`Tokenizer::tokenize`].
#[derive(Debug, Clone)]
pub struct TokenSequence {
    /// `T′ × D` fused embeddings.
    pub embeddings: Var,
    pub spans: Vec<TokenSpan>,
    pub decisions: Vec<RoutingDecision>,
    /// Leading padding added by the coarsest patchify.
    pub padding: usize,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    /// 0-based token indices, used as rotary positions.
    pub fn positions(&self) -> Vec<f64> {
        (0..self.spans.len()).map(|i| i as f64).collect()
    }

    pub fn key_mask(&self) -> Vec<bool> {
        self.spans.iter().map(|s| !s.padded).collect()
    }
}

/// Router weights plus the expert bank. The load-balancing biases live here
/// and are never touched by the optimizer.
#[derive(Debug, Clone)]
pub struct Tokenizer {
    pub cfg: PatchConfig,
    pub d_model: usize,
    pub router: ParamId,
    pub experts: Vec<ExpertMlp>,
    pub bias: Vec<f64>,
}

impl Tokenizer {
    pub fn new(
        cfg: PatchConfig,
        d_model: usize,
        d_expert: usize,
        params: &mut ParamStore,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        if d_model == 0 || d_expert == 0 {
            return Err(Error::config("tokenizer widths must be positive"));
        }
        let ps = cfg.coarsest();
        let router = params.add_uniform("tokenizer.router", &[ps, cfg.total_experts()], ps, ParamGroup::Base, rng);
        let experts = cfg
            .patch_sizes
            .iter()
            .map(|&p| {
                let pre = format!("tokenizer.expert{p}");
                ExpertMlp {
                    size: p,
                    w1: params.add_uniform(format!("{pre}.w1"), &[p, d_expert], p, ParamGroup::Base, rng),
                    b1: params.add(format!("{pre}.b1"), Tensor::zeros(&[d_expert]), ParamGroup::Base, false),
                    w2: params.add_uniform(format!("{pre}.w2"), &[d_expert, d_model], d_expert, ParamGroup::Base, rng),
                    b2: params.add(format!("{pre}.b2"), Tensor::zeros(&[d_model]), ParamGroup::Base, false),
                }
            })
            .collect();
        let bias = vec![0.0; cfg.total_experts()];
        Ok(Self {
            cfg,
            d_model,
            router,
            experts,
            bias,
        })
    }

    /// Snapshot of the router weights and biases.
    pub fn router_state(&self, params: &ParamStore) -> RouterState {
        RouterState {
            weights: params.value(self.router).clone(),
            bias: self.bias.clone(),
        }
    }

    /// Affinities `s′` for every patch row as an `N × (S+Z)` node.
    fn affinities(&self, tape: &mut Tape, patches: Var) -> Var {
        let w = tape.param(self.router);
        let scores = tape.matmul(patches, w);
        let bias = tape.constant(Tensor::row(self.bias.clone()));
        let biased = tape.add_row(scores, bias);
        match self.cfg.softmax_scope {
            SoftmaxScope::AllExperts => tape.softmax(biased),
            SoftmaxScope::RealOnly => {
                let s = self.cfg.real_experts();
                let shifted = {
                    let v = tape.value(biased);
                    let c = v.cols();
                    let shift: Vec<f64> = v
                        .data()
                        .chunks(c)
                        .flat_map(|row| {
                            let m = row[..s].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                            std::iter::repeat_n(-m, c)
                        })
                        .collect();
                    let shift = tape.constant(Tensor::matrix(v.rows(), c, shift));
                    tape.add(biased, shift)
                };
                let e = tape.exp(shifted);
                let real = tape.slice_cols(e, 0, s);
                let denom = tape.row_sum(real);
                let inv = tape.recip(denom);
                tape.mul_col(e, inv)
            }
        }
    }

    /// Route, fuse and concatenate every coarsest patch.
    pub fn tokenize(&self, tape: &mut Tape, patches: &CoarsePatches) -> Result<TokenSequence> {
        let ps = self.cfg.coarsest();
        if patches.patch_size != ps {
            return Err(Error::Shape(format!(
                "patches of size {} for coarsest size {ps}",
                patches.patch_size
            )));
        }
        let n = patches.count();
        let x = tape.constant(Tensor::matrix(n, ps, patches.values.clone()));
        let aff = self.affinities(tape, x);
        let decisions: Vec<RoutingDecision> = {
            let a = tape.value(aff);
            (0..n).map(|r| decide(a.row_slice(r), &self.cfg)).collect()
        };
        let alpha = self.alphas(tape, aff, &decisions);
        let embeddings = self.fuse_rows(tape, x, alpha, &decisions);

        let mut spans = Vec::new();
        for (row, d) in decisions.iter().enumerate() {
            let pk = d.finest_size;
            for m in 0..d.token_count {
                let start = row * ps + m * pk;
                let padded = !patches.observed[start..start + pk].iter().any(|&o| o);
                spans.push(TokenSpan { start, len: pk, padded });
            }
        }
        Ok(TokenSequence {
            embeddings,
            spans,
            decisions,
            padding: patches.padding,
        })
    }

    /// Patchify then tokenize.
    pub fn tokenize_series(&self, tape: &mut Tape, values: &[f64], observed: &[bool]) -> Result<TokenSequence> {
        let patches = patchify_coarsest(values, observed, self.cfg.coarsest())?;
        self.tokenize(tape, &patches)
    }

    /// Fuse a single coarsest patch (`1 × p_S` node) under a given decision
    /// with gate node `gates` (`1 × S`, zero outside the active set).
    pub fn fuse(&self, tape: &mut Tape, patch: Var, gates: Var, decision: &RoutingDecision) -> Var {
        let total = tape.row_sum(gates);
        let inv = tape.recip(total);
        let alpha = tape.mul_col(gates, inv);
        self.fuse_rows(tape, patch, alpha, std::slice::from_ref(decision))
    }

    /// Normalized active gates `α` as an `N × S` node; gradient flows through
    /// the affinities of the selected real experts only.
    fn alphas(&self, tape: &mut Tape, aff: Var, decisions: &[RoutingDecision]) -> Var {
        let s = self.cfg.real_experts();
        let mut mask = Vec::with_capacity(decisions.len() * s);
        let mut floor = Vec::with_capacity(decisions.len() * s);
        for d in decisions {
            for &g in &d.gates {
                let on = if g > 0.0 { 1.0 } else { 0.0 };
                mask.push(on);
                floor.push(on * f64::MIN_POSITIVE);
            }
        }
        let real = tape.slice_cols(aff, 0, s);
        let mask = tape.constant(Tensor::matrix(decisions.len(), s, mask));
        let floor = tape.constant(Tensor::matrix(decisions.len(), s, floor));
        let gates = tape.mul(real, mask);
        let gates = tape.add(gates, floor);
        let total = tape.row_sum(gates);
        let inv = tape.recip(total);
        tape.mul_col(gates, inv)
    }

    /// `e_{n,m} = Σ_i α_{n,i} · MLP_i(ancestor_i(m))` for every token.
    fn fuse_rows(&self, tape: &mut Tape, patches: Var, alpha: Var, decisions: &[RoutingDecision]) -> Var {
        let ps = self.cfg.coarsest();
        let n = decisions.len();
        // token t belongs to coarsest row token_row[t] and covers finest
        // patch token_m[t] (0-based) of size token_pk[t]
        let mut token_row = Vec::new();
        let mut token_m = Vec::new();
        let mut token_pk = Vec::new();
        for (row, d) in decisions.iter().enumerate() {
            for m in 0..d.token_count {
                token_row.push(row);
                token_m.push(m);
                token_pk.push(d.finest_size);
            }
        }
        let tokens = token_row.len();

        let mut out: Option<Var> = None;
        for (i, expert) in self.experts.iter().enumerate() {
            let p = expert.size;
            let per_patch = ps / p;
            // ancestor row in the (N · p_S/p_i) × p_i reshaped matrix, for tokens
            // where expert i is active
            let mut needed: Vec<usize> = Vec::new();
            let mut local = vec![0usize; tokens];
            let mut any = false;
            for t in 0..tokens {
                if decisions[token_row[t]].gates[i] > 0.0 {
                    any = true;
                    let r = token_row[t] * per_patch + token_m[t] * token_pk[t] / p;
                    let pos = match needed.iter().rposition(|&x| x == r) {
                        Some(pos) => pos,
                        None => {
                            needed.push(r);
                            needed.len() - 1
                        }
                    };
                    local[t] = pos;
                }
            }
            if !any {
                continue;
            }
            let sliced = tape.reshape(patches, &[n * per_patch, p]);
            let inputs = tape.gather_rows(sliced, needed);
            let emb = expert.forward(tape, inputs);
            let spread = tape.gather_rows(emb, local);
            let weights = tape.gather_elems(alpha, token_row.iter().map(|&r| (r, i)).collect());
            let term = tape.mul_col(spread, weights);
            out = Some(match out {
                Some(acc) => tape.add(acc, term),
                None => term,
            });
        }
        out.expect("every decision has an active real expert")
    }
}
