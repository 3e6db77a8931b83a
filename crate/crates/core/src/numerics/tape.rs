//! Tensor-level reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation of a forward pass as a node holding its
//! output value. [`Tape::backward`] walks the nodes in reverse, accumulating
//! adjoints, and returns gradients for the parameters that were read through
//! [`Tape::param`]. Constants and [`Tape::detach`]ed values never receive
//! gradient.

use crate::error::{Error, Result};
use crate::numerics::ops::{self, gelu, gelu_grad, moments};
use crate::numerics::params::{Gradients, ParamId, ParamStore};
use crate::numerics::tensor::{gemm_nn, gemm_nt, gemm_tn};
use crate::numerics::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    F64,
    /// Every recorded value is rounded through `f32`.
    F32,
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    ScaleBy(Var, Var),
    Gelu(Var),
    Exp(Var),
    Recip(Var),
    Softmax(Var),
    LayerNorm { x: Var, rstd: Vec<f64> },
    Rotate { x: Var, theta: Var, positions: Vec<f64> },
    SliceCols { x: Var, start: usize },
    SliceRows { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows { x: Var, index: Vec<usize> },
    GatherElems { x: Var, index: Vec<(usize, usize)> },
    RowSum(Var),
    Sum(Var),
    Reshape(Var),
    Pinball {
        pred: Var,
        targets: Vec<f64>,
        weights: Vec<f64>,
        levels: Vec<f64>,
    },
    Opaque { name: String, inputs: Vec<Var> },
}

impl Op {
    fn name(&self) -> &str {
        match self {
            Op::Constant => "constant",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::MatMulNT(..) => "matmul_nt",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRow(..) => "add_row",
            Op::MulRow(..) => "mul_row",
            Op::MulCol(..) => "mul_col",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::ScaleBy(..) => "scale_by",
            Op::Gelu(_) => "gelu",
            Op::Exp(_) => "exp",
            Op::Recip(_) => "recip",
            Op::Softmax(_) => "softmax",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Rotate { .. } => "rotate",
            Op::SliceCols { .. } => "slice_cols",
            Op::SliceRows { .. } => "slice_rows",
            Op::ConcatCols(_) => "concat_cols",
            Op::ConcatRows(_) => "concat_rows",
            Op::GatherRows { .. } => "gather_rows",
            Op::GatherElems { .. } => "gather_elems",
            Op::RowSum(_) => "row_sum",
            Op::Sum(_) => "sum",
            Op::Reshape(_) => "reshape",
            Op::Pinball { .. } => "pinball",
            Op::Opaque { name, .. } => name,
        }
    }
}

struct Node {
    /// `None` for parameters, which are read from the store.
    value: Option<Tensor>,
    op: Op,
    requires_grad: bool,
}

pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
    precision: Precision,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self::with_precision(params, Precision::F64)
    }

    pub fn with_precision(params: &'p ParamStore, precision: Precision) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_vars: vec![None; params.len()],
            precision,
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.params.value(*id),
            _ => unreachable!("node without value"),
        }
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).data()[0]
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, mut value: Tensor, op: Op, requires_grad: bool) -> Var {
        if self.precision == Precision::F32 {
            for x in value.data_mut() {
                *x = *x as f32 as f64;
            }
        }
        self.nodes.push(Node {
            value: Some(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// Read a parameter; repeated reads share one node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            requires_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    /// Same value, no gradient flows back through it.
    pub fn detach(&mut self, x: Var) -> Var {
        let value = self.value(x).clone();
        self.push(value, Op::Constant, false)
    }

    /// Record a value computed outside the tape from `inputs`. It has no
    /// backward rule: differentiating through it is an error.
    pub fn opaque(&mut self, name: impl Into<String>, value: Tensor, inputs: &[Var]) -> Var {
        let rg = inputs.iter().any(|&v| self.rg(v));
        self.push(
            value,
            Op::Opaque {
                name: name.into(),
                inputs: inputs.to_vec(),
            },
            rg,
        )
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul(self.value(b)).expect("matmul shapes");
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::MatMul(a, b), rg)
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k, n) = (av.rows(), av.cols(), bv.rows());
        assert_eq!(k, bv.cols(), "matmul_nt inner dims");
        let mut out = vec![0.0; m * n];
        gemm_nt(av.data(), bv.data(), &mut out, m, k, n);
        let rg = self.rg(a) || self.rg(b);
        self.push(Tensor::matrix(m, n, out), Op::MatMulNT(a, b), rg)
    }

    fn zip_same(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "elementwise shapes");
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(av.shape().to_vec(), data).unwrap()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_same(a, b, |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_same(a, b, |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::Sub(a, b), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_same(a, b, |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::Mul(a, b), rg)
    }

    fn broadcast_row(&self, a: Var, row: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (av, rv) = (self.value(a), self.value(row));
        let c = av.cols();
        assert_eq!(rv.len(), c, "row broadcast width");
        let r = rv.data();
        let data = av
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, r[i % c]))
            .collect();
        Tensor::new(av.shape().to_vec(), data).unwrap()
    }

    /// `a + row` with `row` broadcast over the rows of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let out = self.broadcast_row(a, row, |x, y| x + y);
        let rg = self.rg(a) || self.rg(row);
        self.push(out, Op::AddRow(a, row), rg)
    }

    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let out = self.broadcast_row(a, row, |x, y| x * y);
        let rg = self.rg(a) || self.rg(row);
        self.push(out, Op::MulRow(a, row), rg)
    }

    /// `a * col` with an `m × 1` column broadcast over the columns of `a`.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        let (av, cv) = (self.value(a), self.value(col));
        let c = av.cols();
        assert_eq!(cv.len(), av.rows(), "column broadcast height");
        let cd = cv.data();
        let data = av
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x * cd[i / c])
            .collect();
        let out = Tensor::new(av.shape().to_vec(), data).unwrap();
        let rg = self.rg(a) || self.rg(col);
        self.push(out, Op::MulCol(a, col), rg)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x * s);
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, s), rg)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x + s);
        let rg = self.rg(a);
        self.push(out, Op::AddScalar(a), rg)
    }

    /// `a` times a `1 × 1` node.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Var {
        assert_eq!(self.value(s).len(), 1, "scale_by needs a scalar");
        let k = self.value(s).data()[0];
        let out = self.value(a).map(|x| x * k);
        let rg = self.rg(a) || self.rg(s);
        self.push(out, Op::ScaleBy(a, s), rg)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(gelu);
        let rg = self.rg(a);
        self.push(out, Op::Gelu(a), rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::exp);
        let rg = self.rg(a);
        self.push(out, Op::Exp(a), rg)
    }

    pub fn recip(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| 1.0 / x);
        let rg = self.rg(a);
        self.push(out, Op::Recip(a), rg)
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        let c = out.cols();
        for row in out.data_mut().chunks_mut(c) {
            ops::softmax_in_place(row);
        }
        let rg = self.rg(a);
        self.push(out, Op::Softmax(a), rg)
    }

    /// Row-wise normalization to zero mean / unit variance (no affine).
    pub fn layer_norm(&mut self, a: Var, eps: f64) -> Var {
        let av = self.value(a);
        let c = av.cols();
        let mut rstd = Vec::with_capacity(av.rows());
        let mut out = Vec::with_capacity(av.len());
        for row in av.data().chunks(c) {
            let (mean, rs) = moments(row, eps);
            rstd.push(rs);
            out.extend(row.iter().map(|&v| (v - mean) * rs));
        }
        let out = Tensor::new(av.shape().to_vec(), out).unwrap();
        let rg = self.rg(a);
        self.push(out, Op::LayerNorm { x: a, rstd }, rg)
    }

    /// Rotary rotation of coordinate pairs; `theta` is a `1 × cols/2` node.
    pub fn rotate(&mut self, x: Var, theta: Var, positions: &[f64]) -> Var {
        let (xv, tv) = (self.value(x), self.value(theta));
        let cols = xv.cols();
        let out = ops::rotate_pairs(xv.data(), cols, tv.data(), positions);
        let out = Tensor::matrix(xv.rows(), cols, out);
        let rg = self.rg(x) || self.rg(theta);
        self.push(
            out,
            Op::Rotate {
                x,
                theta,
                positions: positions.to_vec(),
            },
            rg,
        )
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let xv = self.value(x);
        let c = xv.cols();
        assert!(start + len <= c, "slice_cols out of range");
        let mut out = Vec::with_capacity(xv.rows() * len);
        for row in xv.data().chunks(c) {
            out.extend_from_slice(&row[start..start + len]);
        }
        let out = Tensor::matrix(xv.rows(), len, out);
        let rg = self.rg(x);
        self.push(out, Op::SliceCols { x, start }, rg)
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Var {
        let xv = self.value(x);
        let c = xv.cols();
        assert!(start + len <= xv.rows(), "slice_rows out of range");
        let out = Tensor::matrix(len, c, xv.data()[start * c..(start + len) * c].to_vec());
        let rg = self.rg(x);
        self.push(out, Op::SliceRows { x, start }, rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = vec![0.0; rows * total];
        let mut off = 0;
        for &p in parts {
            let pv = self.value(p);
            assert_eq!(pv.rows(), rows, "concat_cols rows");
            let c = pv.cols();
            for r in 0..rows {
                out[r * total + off..r * total + off + c].copy_from_slice(pv.row_slice(r));
            }
            off += c;
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(Tensor::matrix(rows, total, out), Op::ConcatCols(parts.to_vec()), rg)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols();
        let mut out = Vec::new();
        for &p in parts {
            let pv = self.value(p);
            assert_eq!(pv.cols(), cols, "concat_rows cols");
            out.extend_from_slice(pv.data());
        }
        let rows = out.len() / cols;
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(Tensor::matrix(rows, cols, out), Op::ConcatRows(parts.to_vec()), rg)
    }

    pub fn gather_rows(&mut self, x: Var, index: Vec<usize>) -> Var {
        let xv = self.value(x);
        let c = xv.cols();
        let mut out = Vec::with_capacity(index.len() * c);
        for &i in &index {
            out.extend_from_slice(xv.row_slice(i));
        }
        let out = Tensor::matrix(index.len(), c, out);
        let rg = self.rg(x);
        self.push(out, Op::GatherRows { x, index }, rg)
    }

    /// Pick `(row, col)` entries into an `n × 1` column.
    pub fn gather_elems(&mut self, x: Var, index: Vec<(usize, usize)>) -> Var {
        let xv = self.value(x);
        let out: Vec<f64> = index.iter().map(|&(r, c)| xv.get(r, c)).collect();
        let out = Tensor::matrix(index.len(), 1, out);
        let rg = self.rg(x);
        self.push(out, Op::GatherElems { x, index }, rg)
    }

    pub fn row_sum(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let out: Vec<f64> = xv.data().chunks(xv.cols()).map(|r| r.iter().sum()).collect();
        let out = Tensor::matrix(xv.rows(), 1, out);
        let rg = self.rg(x);
        self.push(out, Op::RowSum(x), rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let out = self.value(x).clone().reshape(shape).expect("reshape");
        let rg = self.rg(x);
        self.push(out, Op::Reshape(x), rg)
    }

    /// `Σ_t weights[t] · Σ_k pinball(targets[t], pred[t, k], levels[k])`.
    pub fn pinball(&mut self, pred: Var, targets: &[f64], weights: &[f64], levels: &[f64]) -> Var {
        let pv = self.value(pred);
        assert_eq!(pv.rows(), targets.len(), "pinball rows");
        assert_eq!(pv.cols(), levels.len(), "pinball cols");
        assert_eq!(weights.len(), targets.len(), "pinball weights");
        let mut total = 0.0;
        for (t, (&y, &w)) in targets.iter().zip(weights).enumerate() {
            if w == 0.0 {
                continue;
            }
            let row = pv.row_slice(t);
            let s: f64 = row
                .iter()
                .zip(levels)
                .map(|(&q, &a)| crate::training::loss::pinball(y, q, a))
                .sum();
            total += w * s;
        }
        let rg = self.rg(pred);
        self.push(
            Tensor::scalar(total),
            Op::Pinball {
                pred,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
                levels: levels.to_vec(),
            },
            rg,
        )
    }

    /// Gradients of the scalar `out` with respect to every parameter read.
    pub fn backward(&self, out: Var) -> Result<Gradients> {
        let mut grads = Gradients::empty(self.params.len());
        if self.value(out).len() != 1 {
            return Err(Error::Shape("backward needs a scalar output".into()));
        }
        if !self.rg(out) {
            return Ok(grads);
        }
        let mut adj: Vec<Option<Tensor>> = (0..=out.0).map(|_| None).collect();
        adj[out.0] = Some(Tensor::scalar(1.0));

        for i in (0..=out.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let y = self.value(Var(i));
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => grads.set(*id, g),
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                    if self.rg(*a) {
                        let mut da = vec![0.0; m * k];
                        gemm_nt(g.data(), bv.data(), &mut da, m, n, k);
                        acc(&mut adj, *a, shaped(av, da));
                    }
                    if self.rg(*b) {
                        let mut db = vec![0.0; k * n];
                        gemm_tn(av.data(), g.data(), &mut db, k, m, n);
                        acc(&mut adj, *b, shaped(bv, db));
                    }
                }
                Op::MatMulNT(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (av.rows(), av.cols(), bv.rows());
                    if self.rg(*a) {
                        let mut da = vec![0.0; m * k];
                        gemm_nn(g.data(), bv.data(), &mut da, m, n, k);
                        acc(&mut adj, *a, shaped(av, da));
                    }
                    if self.rg(*b) {
                        let mut db = vec![0.0; n * k];
                        gemm_tn(g.data(), av.data(), &mut db, n, m, k);
                        acc(&mut adj, *b, shaped(bv, db));
                    }
                }
                Op::Add(a, b) => {
                    if self.rg(*b) {
                        acc(&mut adj, *b, g.clone());
                    }
                    acc(&mut adj, *a, g);
                }
                Op::Sub(a, b) => {
                    if self.rg(*b) {
                        acc(&mut adj, *b, g.map(|v| -v));
                    }
                    acc(&mut adj, *a, g);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.rg(*a) {
                        acc(&mut adj, *a, zip(&g, bv, |x, y| x * y));
                    }
                    if self.rg(*b) {
                        acc(&mut adj, *b, zip(&g, av, |x, y| x * y));
                    }
                }
                Op::AddRow(a, row) => {
                    if self.rg(*row) {
                        let rv = self.value(*row);
                        acc(&mut adj, *row, shaped(rv, col_sums(&g)));
                    }
                    acc(&mut adj, *a, g);
                }
                Op::MulRow(a, row) => {
                    let (av, rv) = (self.value(*a), self.value(*row));
                    let c = av.cols();
                    if self.rg(*row) {
                        let mut dr = vec![0.0; c];
                        for (i, (&gv, &x)) in g.data().iter().zip(av.data()).enumerate() {
                            dr[i % c] += gv * x;
                        }
                        acc(&mut adj, *row, shaped(rv, dr));
                    }
                    if self.rg(*a) {
                        let r = rv.data();
                        let da = g.data().iter().enumerate().map(|(i, &gv)| gv * r[i % c]).collect();
                        acc(&mut adj, *a, shaped(av, da));
                    }
                }
                Op::MulCol(a, col) => {
                    let (av, cv) = (self.value(*a), self.value(*col));
                    let c = av.cols();
                    if self.rg(*col) {
                        let dc = g
                            .data()
                            .chunks(c)
                            .zip(av.data().chunks(c))
                            .map(|(gr, xr)| gr.iter().zip(xr).map(|(p, q)| p * q).sum())
                            .collect();
                        acc(&mut adj, *col, shaped(cv, dc));
                    }
                    if self.rg(*a) {
                        let cd = cv.data();
                        let da = g.data().iter().enumerate().map(|(i, &gv)| gv * cd[i / c]).collect();
                        acc(&mut adj, *a, shaped(av, da));
                    }
                }
                Op::Scale(a, s) => acc(&mut adj, *a, g.map(|v| v * s)),
                Op::AddScalar(a) => acc(&mut adj, *a, g),
                Op::ScaleBy(a, s) => {
                    let (av, sv) = (self.value(*a), self.value(*s));
                    if self.rg(*s) {
                        let d: f64 = g.data().iter().zip(av.data()).map(|(p, q)| p * q).sum();
                        acc(&mut adj, *s, shaped(sv, vec![d]));
                    }
                    if self.rg(*a) {
                        let k = sv.data()[0];
                        acc(&mut adj, *a, g.map(|v| v * k));
                    }
                }
                Op::Gelu(a) => {
                    let av = self.value(*a);
                    acc(&mut adj, *a, zip(&g, av, |d, x| d * gelu_grad(x)));
                }
                Op::Exp(a) => acc(&mut adj, *a, zip(&g, y, |d, v| d * v)),
                Op::Recip(a) => acc(&mut adj, *a, zip(&g, y, |d, v| -d * v * v)),
                Op::Softmax(a) => {
                    let c = y.cols();
                    let mut da = Vec::with_capacity(y.len());
                    for (gr, yr) in g.data().chunks(c).zip(y.data().chunks(c)) {
                        let dot: f64 = gr.iter().zip(yr).map(|(p, q)| p * q).sum();
                        da.extend(gr.iter().zip(yr).map(|(&p, &q)| q * (p - dot)));
                    }
                    acc(&mut adj, *a, shaped(y, da));
                }
                Op::LayerNorm { x, rstd } => {
                    let c = y.cols() as f64;
                    let mut dx = Vec::with_capacity(y.len());
                    for ((gr, yr), &rs) in g.data().chunks(y.cols()).zip(y.data().chunks(y.cols())).zip(rstd) {
                        let mg = gr.iter().sum::<f64>() / c;
                        let mgy = gr.iter().zip(yr).map(|(p, q)| p * q).sum::<f64>() / c;
                        dx.extend(gr.iter().zip(yr).map(|(&p, &q)| rs * (p - mg - q * mgy)));
                    }
                    acc(&mut adj, *x, shaped(y, dx));
                }
                Op::Rotate { x, theta, positions } => {
                    let (xv, tv) = (self.value(*x), self.value(*theta));
                    let cols = xv.cols();
                    let th = tv.data();
                    if self.rg(*x) {
                        // inverse rotation of the adjoint
                        let neg: Vec<f64> = positions.iter().map(|p| -p).collect();
                        let dx = ops::rotate_pairs(g.data(), cols, th, &neg);
                        acc(&mut adj, *x, shaped(xv, dx));
                    }
                    if self.rg(*theta) {
                        let mut dth = vec![0.0; th.len()];
                        for (r, &pos) in positions.iter().enumerate() {
                            let gr = &g.data()[r * cols..(r + 1) * cols];
                            let yr = &y.data()[r * cols..(r + 1) * cols];
                            for j in 0..th.len() {
                                dth[j] += pos * (gr[2 * j + 1] * yr[2 * j] - gr[2 * j] * yr[2 * j + 1]);
                            }
                        }
                        acc(&mut adj, *theta, shaped(tv, dth));
                    }
                }
                Op::SliceCols { x, start } => {
                    let xv = self.value(*x);
                    let (c, len) = (xv.cols(), g.cols());
                    let mut dx = vec![0.0; xv.len()];
                    for (r, gr) in g.data().chunks(len).enumerate() {
                        dx[r * c + start..r * c + start + len].copy_from_slice(gr);
                    }
                    acc(&mut adj, *x, shaped(xv, dx));
                }
                Op::SliceRows { x, start } => {
                    let xv = self.value(*x);
                    let c = xv.cols();
                    let mut dx = vec![0.0; xv.len()];
                    dx[start * c..start * c + g.len()].copy_from_slice(g.data());
                    acc(&mut adj, *x, shaped(xv, dx));
                }
                Op::ConcatCols(parts) => {
                    let total = g.cols();
                    let mut off = 0;
                    for &p in parts {
                        let pv = self.value(p);
                        let c = pv.cols();
                        if self.rg(p) {
                            let mut dp = Vec::with_capacity(pv.len());
                            for gr in g.data().chunks(total) {
                                dp.extend_from_slice(&gr[off..off + c]);
                            }
                            acc(&mut adj, p, shaped(pv, dp));
                        }
                        off += c;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let pv = self.value(p);
                        let n = pv.len();
                        if self.rg(p) {
                            acc(&mut adj, p, shaped(pv, g.data()[off..off + n].to_vec()));
                        }
                        off += n;
                    }
                }
                Op::GatherRows { x, index } => {
                    let xv = self.value(*x);
                    let c = xv.cols();
                    let mut dx = vec![0.0; xv.len()];
                    for (gr, &i) in g.data().chunks(c).zip(index) {
                        for (d, v) in dx[i * c..(i + 1) * c].iter_mut().zip(gr) {
                            *d += v;
                        }
                    }
                    acc(&mut adj, *x, shaped(xv, dx));
                }
                Op::GatherElems { x, index } => {
                    let xv = self.value(*x);
                    let c = xv.cols();
                    let mut dx = vec![0.0; xv.len()];
                    for (&gv, &(r, cc)) in g.data().iter().zip(index) {
                        dx[r * c + cc] += gv;
                    }
                    acc(&mut adj, *x, shaped(xv, dx));
                }
                Op::RowSum(x) => {
                    let xv = self.value(*x);
                    let c = xv.cols();
                    let gd = g.data();
                    let dx = (0..xv.len()).map(|i| gd[i / c]).collect();
                    acc(&mut adj, *x, shaped(xv, dx));
                }
                Op::Sum(x) => {
                    let xv = self.value(*x);
                    acc(&mut adj, *x, Tensor::filled(xv.shape(), g.data()[0]));
                }
                Op::Reshape(x) => {
                    let xv = self.value(*x);
                    acc(&mut adj, *x, shaped(xv, g.into_data()));
                }
                Op::Pinball {
                    pred,
                    targets,
                    weights,
                    levels,
                } => {
                    let pv = self.value(*pred);
                    let k = levels.len();
                    let s = g.data()[0];
                    let mut dp = vec![0.0; pv.len()];
                    for (t, (&yv, &w)) in targets.iter().zip(weights).enumerate() {
                        if w == 0.0 {
                            continue;
                        }
                        for (j, &a) in levels.iter().enumerate() {
                            let q = pv.data()[t * k + j];
                            let ind = if yv < q { 1.0 } else { 0.0 };
                            dp[t * k + j] = s * w * (ind - a);
                        }
                    }
                    acc(&mut adj, *pred, shaped(pv, dp));
                }
                Op::Opaque { name, inputs } => {
                    if inputs.iter().any(|&v| self.rg(v)) {
                        return Err(Error::UnsupportedPrimitive(name.clone()));
                    }
                }
            }
        }
        Ok(grads)
    }

    /// Name of the operation that produced `v`.
    pub fn op_name(&self, v: Var) -> &str {
        self.nodes[v.0].op.name()
    }
}

fn acc(adj: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut adj[v.0] {
        Some(t) => t.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn shaped(like: &Tensor, data: Vec<f64>) -> Tensor {
    Tensor::new(like.shape().to_vec(), data).expect("adjoint shape")
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(b.shape().to_vec(), data).unwrap()
}

fn col_sums(g: &Tensor) -> Vec<f64> {
    let c = g.cols();
    let mut out = vec![0.0; c];
    for row in g.data().chunks(c) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    out
}

/// Value and parameter gradients of a scalar computation built on a tape.
pub fn grad<F>(params: &ParamStore, f: F) -> Result<(f64, Gradients)>
where
    F: FnOnce(&mut Tape<'_>) -> Result<Var>,
{
    let mut tape = Tape::new(params);
    let out = f(&mut tape)?;
    let value = tape.scalar(out);
    let grads = tape.backward(out)?;
    Ok((value, grads))
}
