//! Reverse-mode automatic differentiation over [`Matrix`] values.
//!
//! A [`Tape`] records every operation of one forward pass. Calling
//! [`Tape::backward`] on a `1 × 1` node walks the record in reverse and
//! returns the gradient of that scalar with respect to every node.
//!
//! Operations check their operand shapes with assertions: a mismatch here is
//! a bug in model wiring, not bad user input. User-facing validation happens
//! in the components that build on the tape.

use crate::tensor::{dot, Matrix};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise nonlinearities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Unary {
    Tanh,
    Sigmoid,
    /// `ln(1 + e^x)`.
    Softplus,
    LeakyRelu(f64),
    /// `s / (s + 2)`: subjective-logic credibility of total binary evidence `s`.
    Credibility,
}

impl Unary {
    fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Tanh => x.tanh(),
            Unary::Sigmoid => sigmoid(x),
            Unary::Softplus => softplus(x),
            Unary::LeakyRelu(slope) => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Unary::Credibility => x / (x + 2.0),
        }
    }

    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Tanh => 1.0 - y * y,
            Unary::Sigmoid => y * (1.0 - y),
            Unary::Softplus => sigmoid(x),
            Unary::LeakyRelu(slope) => {
                if x > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Unary::Credibility => 2.0 / ((x + 2.0) * (x + 2.0)),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `ln Σ e^x` split as `(max, ln(1 + rest))` so that `x_i − ln Σ e^x` can be
/// formed as `(x_i − max) − ln(1 + rest)` without cancellation.
pub fn log_sum_exp_parts(xs: &[f64]) -> (f64, f64) {
    let (arg, max) = xs
        .iter()
        .cloned()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(i, m), (j, v)| if v > m { (j, v) } else { (i, m) });
    let rest: f64 = xs
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != arg)
        .map(|(_, v)| (v - max).exp())
        .sum();
    (max, rest.ln_1p())
}

/// Clamp applied to probabilities before taking logarithms.
pub const PROB_EPS: f64 = 1e-7;

const NORM_FLOOR: f64 = 1e-12;
const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Mul(Var, Var),
    ScaleRows(Var, Var),
    Unary(Var, Unary),
    Softmax(Var),
    LogSoftmax(Var),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    MeanRows(Var),
    Sum(Var),
    Gather(Var, Vec<usize>),
    OuterAdd(Var, Var),
    NormalizeRows(Var),
    LayerNorm(Var),
    Bce(Var, Vec<f64>),
}

#[derive(Debug, Clone)]
struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient for `v`, or `None` when the loss does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`, materialising zeros of the given shape if absent.
    pub fn get_or_zeros(&self, v: Var, rows: usize, cols: usize) -> Matrix {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(rows, cols))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.shape(), (1, 1), "not a scalar node");
        m.get(0, 0)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul(self.value(b));
        self.push(out, Op::MatMul(a, b))
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul_t(self.value(b));
        self.push(out, Op::MatMulT(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(out, Op::Add(a, b))
    }

    /// Adds the `1 × c` row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let b = self.value(bias);
        assert_eq!(b.rows(), 1, "add_row expects a single bias row");
        assert_eq!(b.cols(), self.value(a).cols(), "add_row width mismatch");
        let mut out = self.value(a).clone();
        let bias_row = b.row(0).to_vec();
        for r in 0..out.rows() {
            for (o, bv) in out.row_mut(r).iter_mut().zip(&bias_row) {
                *o += bv;
            }
        }
        self.push(out, Op::AddRow(a, bias))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).scale(k);
        self.push(out, Op::Scale(a, k))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(out, Op::Mul(a, b))
    }

    /// Multiplies row `r` of `a` by `factors[r]`, where `factors` is `rows × 1`.
    pub fn scale_rows(&mut self, a: Var, factors: Var) -> Var {
        let f = self.value(factors);
        let m = self.value(a);
        assert_eq!(f.shape(), (m.rows(), 1), "scale_rows expects a column of factors");
        let mut out = m.clone();
        for r in 0..out.rows() {
            let k = f.get(r, 0);
            for o in out.row_mut(r) {
                *o *= k;
            }
        }
        self.push(out, Op::ScaleRows(a, factors))
    }

    pub fn unary(&mut self, a: Var, kind: Unary) -> Var {
        let out = self.value(a).map(|x| kind.apply(x));
        self.push(out, Op::Unary(a, kind))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Sigmoid)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Softplus)
    }

    /// Row-wise softmax.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let out = softmax_rows(self.value(a), None);
        self.push(out, Op::Softmax(a))
    }

    /// Row-wise softmax restricted to entries where `mask` is true; masked
    /// entries get probability exactly zero. Every row needs at least one
    /// unmasked entry.
    pub fn masked_softmax_rows(&mut self, a: Var, mask: &[bool]) -> Var {
        let out = softmax_rows(self.value(a), Some(mask));
        self.push(out, Op::Softmax(a))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut out = x.clone();
        for r in 0..x.rows() {
            let row = x.row(r);
            let (max, tail) = log_sum_exp_parts(row);
            for o in out.row_mut(r) {
                *o = (*o - max) - tail;
            }
        }
        self.push(out, Op::LogSoftmax(a))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_rows of nothing");
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let m = self.value(p);
            assert_eq!(m.cols(), cols, "concat_rows width mismatch");
            rows += m.rows();
            data.extend_from_slice(m.data());
        }
        let out = Matrix::from_vec(rows, cols, data).expect("sizes checked");
        self.push(out, Op::ConcatRows(parts.to_vec()))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let m = self.value(p);
            assert_eq!(m.rows(), rows, "concat_cols height mismatch");
            for r in 0..rows {
                out.row_mut(r)[offset..offset + m.cols()].copy_from_slice(m.row(r));
            }
            offset += m.cols();
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let m = self.value(a);
        assert!(start + len <= m.rows(), "slice_rows out of range");
        let out = m.slice_rows(start, len);
        self.push(out, Op::SliceRows(a, start))
    }

    pub fn row(&mut self, a: Var, r: usize) -> Var {
        self.slice_rows(a, r, 1)
    }

    /// Column-wise mean over rows, giving a `1 × c` row.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let out = self.value(a).mean_rows();
        self.push(out, Op::MeanRows(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Matrix::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a))
    }

    /// Selects rows of `table` by index (embedding lookup).
    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Var {
        let t = self.value(table);
        let cols = t.cols();
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            assert!(i < t.rows(), "gather index {i} out of range");
            data.extend_from_slice(t.row(i));
        }
        let out = Matrix::from_vec(indices.len(), cols, data).expect("sizes checked");
        self.push(out, Op::Gather(table, indices.to_vec()))
    }

    /// `out[i][j] = col[i] + row[j]` for an `r × 1` column and `1 × c` row.
    pub fn outer_add(&mut self, col: Var, row: Var) -> Var {
        let c = self.value(col);
        let r = self.value(row);
        assert_eq!(c.cols(), 1, "outer_add expects a column");
        assert_eq!(r.rows(), 1, "outer_add expects a row");
        let mut out = Matrix::zeros(c.rows(), r.cols());
        for i in 0..c.rows() {
            let ci = c.get(i, 0);
            for (o, rj) in out.row_mut(i).iter_mut().zip(r.row(0)) {
                *o = ci + rj;
            }
        }
        self.push(out, Op::OuterAdd(col, row))
    }

    /// Scales each row to unit Euclidean norm.
    pub fn normalize_rows(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for r in 0..out.rows() {
            let n = dot(out.row(r), out.row(r)).sqrt().max(NORM_FLOOR);
            for o in out.row_mut(r) {
                *o /= n;
            }
        }
        self.push(out, Op::NormalizeRows(a))
    }

    /// Per-row standardisation without affine parameters.
    pub fn layer_norm(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for v in row.iter_mut() {
                *v = (*v - mean) * inv;
            }
        }
        self.push(out, Op::LayerNorm(a))
    }

    /// Mean binary cross-entropy of an `r × 1` probability column against
    /// `targets`, with probabilities clamped to `[PROB_EPS, 1 - PROB_EPS]`.
    pub fn bce(&mut self, probs: Var, targets: &[f64]) -> Var {
        let p = self.value(probs);
        assert_eq!(p.shape(), (targets.len(), 1), "bce expects an r x 1 column");
        let total: f64 = (0..targets.len())
            .map(|i| binary_cross_entropy(targets[i], p.get(i, 0)))
            .sum();
        let out = Matrix::scalar(total / targets.len() as f64);
        self.push(out, Op::Bce(probs, targets.to_vec()))
    }

    /// Gradients of the scalar node `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.shape(loss), (1, 1), "backward needs a scalar loss");
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let da = g.matmul_t(self.value(*b));
                    let db = self.value(*a).t_matmul(&g);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::MatMulT(a, b) => {
                    // out = a bᵀ: da = g b, db = gᵀ a
                    let da = g.matmul(self.value(*b));
                    let db = g.t_matmul(self.value(*a));
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, g.transpose()),
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::AddRow(a, bias) => {
                    let mut db = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (d, v) in db.row_mut(0).iter_mut().zip(g.row(r)) {
                            *d += v;
                        }
                    }
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *bias, db);
                }
                Op::Scale(a, k) => accumulate(&mut grads, *a, g.scale(*k)),
                Op::Mul(a, b) => {
                    let da = g.zip_map(self.value(*b), |x, y| x * y);
                    let db = g.zip_map(self.value(*a), |x, y| x * y);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::ScaleRows(a, f) => {
                    let fv = self.value(*f);
                    let av = self.value(*a);
                    let mut da = g.clone();
                    let mut df = Matrix::zeros(fv.rows(), 1);
                    for r in 0..g.rows() {
                        let k = fv.get(r, 0);
                        df.set(r, 0, dot(g.row(r), av.row(r)));
                        for d in da.row_mut(r) {
                            *d *= k;
                        }
                    }
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *f, df);
                }
                Op::Unary(a, kind) => {
                    let x = self.value(*a);
                    let y = &node.value;
                    let mut da = g.clone();
                    for ((d, &xv), &yv) in da.data_mut().iter_mut().zip(x.data()).zip(y.data()) {
                        *d *= kind.derivative(xv, yv);
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let mut da = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let s = dot(g.row(r), y.row(r));
                        for ((d, &gv), &yv) in da.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r))
                        {
                            *d = yv * (gv - s);
                        }
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::LogSoftmax(a) => {
                    let y = &node.value;
                    let mut da = g.clone();
                    for r in 0..y.rows() {
                        let s: f64 = g.row(r).iter().sum();
                        for (d, &yv) in da.row_mut(r).iter_mut().zip(y.row(r)) {
                            *d -= yv.exp() * s;
                        }
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let rows = self.value(p).rows();
                        accumulate(&mut grads, p, g.slice_rows(offset, rows));
                        offset += rows;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let cols = self.value(p).cols();
                        let mut dp = Matrix::zeros(g.rows(), cols);
                        for r in 0..g.rows() {
                            dp.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + cols]);
                        }
                        accumulate(&mut grads, p, dp);
                        offset += cols;
                    }
                }
                Op::SliceRows(a, start) => {
                    let (rows, cols) = self.shape(*a);
                    let mut da = Matrix::zeros(rows, cols);
                    for r in 0..g.rows() {
                        da.row_mut(start + r).copy_from_slice(g.row(r));
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::MeanRows(a) => {
                    let (rows, cols) = self.shape(*a);
                    let mut da = Matrix::zeros(rows, cols);
                    let inv = 1.0 / rows as f64;
                    for r in 0..rows {
                        for (d, &gv) in da.row_mut(r).iter_mut().zip(g.row(0)) {
                            *d = gv * inv;
                        }
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::Sum(a) => {
                    let (rows, cols) = self.shape(*a);
                    accumulate(&mut grads, *a, Matrix::filled(rows, cols, g.get(0, 0)));
                }
                Op::Gather(table, indices) => {
                    let (rows, cols) = self.shape(*table);
                    let mut dt = Matrix::zeros(rows, cols);
                    for (r, &i) in indices.iter().enumerate() {
                        for (d, &gv) in dt.row_mut(i).iter_mut().zip(g.row(r)) {
                            *d += gv;
                        }
                    }
                    accumulate(&mut grads, *table, dt);
                }
                Op::OuterAdd(col, row) => {
                    let mut dc = Matrix::zeros(g.rows(), 1);
                    let mut dr = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        dc.set(r, 0, g.row(r).iter().sum());
                        for (d, &gv) in dr.row_mut(0).iter_mut().zip(g.row(r)) {
                            *d += gv;
                        }
                    }
                    accumulate(&mut grads, *col, dc);
                    accumulate(&mut grads, *row, dr);
                }
                Op::NormalizeRows(a) => {
                    let x = self.value(*a);
                    let y = &node.value;
                    let mut da = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let n = dot(x.row(r), x.row(r)).sqrt();
                        if n <= NORM_FLOOR {
                            for (d, &gv) in da.row_mut(r).iter_mut().zip(g.row(r)) {
                                *d = gv / NORM_FLOOR;
                            }
                            continue;
                        }
                        let yg = dot(y.row(r), g.row(r));
                        for ((d, &gv), &yv) in da.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r))
                        {
                            *d = (gv - yv * yg) / n;
                        }
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::LayerNorm(a) => {
                    let x = self.value(*a);
                    let y = &node.value;
                    let mut da = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let xr = x.row(r);
                        let n = xr.len() as f64;
                        let mean = xr.iter().sum::<f64>() / n;
                        let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                        let g_mean = g.row(r).iter().sum::<f64>() / n;
                        let gy_mean = dot(g.row(r), y.row(r)) / n;
                        for ((d, &gv), &yv) in da.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r))
                        {
                            *d = inv * (gv - g_mean - yv * gy_mean);
                        }
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::Bce(p, targets) => {
                    let pv = self.value(*p);
                    let scale = g.get(0, 0) / targets.len() as f64;
                    let mut dp = Matrix::zeros(pv.rows(), 1);
                    for (i, &y) in targets.iter().enumerate() {
                        let prob = pv.get(i, 0);
                        if prob <= PROB_EPS || prob >= 1.0 - PROB_EPS {
                            continue;
                        }
                        dp.set(i, 0, scale * (-y / prob + (1.0 - y) / (1.0 - prob)));
                    }
                    accumulate(&mut grads, *p, dp);
                }
            }
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn softmax_rows(x: &Matrix, mask: Option<&[bool]>) -> Matrix {
    if let Some(m) = mask {
        assert_eq!(m.len(), x.len(), "softmax mask size mismatch");
    }
    let mut out = Matrix::zeros(x.rows(), x.cols());
    let cols = x.cols();
    for r in 0..x.rows() {
        let allowed = |c: usize| mask.map_or(true, |m| m[r * cols + c]);
        let max = (0..cols)
            .filter(|&c| allowed(c))
            .map(|c| x.get(r, c))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(max.is_finite() || max == f64::INFINITY, "softmax row {r} fully masked");
        let mut total = 0.0;
        for c in 0..cols {
            if allowed(c) {
                let e = (x.get(r, c) - max).exp();
                out.set(r, c, e);
                total += e;
            }
        }
        for o in out.row_mut(r) {
            *o /= total;
        }
    }
    out
}

/// `-(y ln p + (1 - y) ln(1 - p))` with `p` clamped away from 0 and 1.
pub fn binary_cross_entropy(y: f64, p: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}
