//! Tape-based reverse-mode differentiation.
//!
//! Nodes are appended in evaluation order, so the tape is already a
//! topological order and `backward` is a single reverse sweep.

use alloc::borrow::Cow;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Matrix, ParamGrads, ParamId, ParamStore, TensorError};

const LN_EPS: f64 = 1e-5;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// `Rows` reduces or stacks along the row dimension (the result of a mean is
/// `1 x cols`); `Cols` along the column dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(usize, usize),
    MatMulNt(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    AddRow(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Relu(usize),
    Sum(usize),
    Mean(usize, Axis),
    WeightedRowSum(usize, Vec<f64>),
    Concat(Vec<usize>, Axis),
    SliceCols(usize, usize),
    Reshape(usize),
    Gather(usize, Vec<Option<usize>>),
    LayerNorm { x: usize, gain: usize, bias: usize, xhat: Vec<f64>, rstd: Vec<f64> },
    Softmax(usize),
    Dropout(usize, Vec<f64>),
    CrossEntropy { logits: usize, target: usize, probs: Vec<f64> },
}

#[derive(Debug)]
struct Node<'p> {
    value: Cow<'p, Matrix>,
    op: Op,
    needs_grad: bool,
}

/// One forward pass worth of recorded operations. Parameters are borrowed,
/// not copied.
#[derive(Debug, Default)]
pub struct Tape<'p> {
    nodes: Vec<Node<'p>>,
}

fn shape_err(op: &'static str, lhs: (usize, usize), rhs: (usize, usize)) -> TensorError {
    TensorError::Shape { op, lhs, rhs }
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op, inputs: &[usize]) -> Var {
        let needs_grad = inputs.iter().any(|&i| self.nodes[i].needs_grad);
        self.nodes.push(Node { value: Cow::Owned(value), op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// A value that receives no gradient.
    pub fn constant(&mut self, m: Matrix) -> Var {
        self.nodes.push(Node { value: Cow::Owned(m), op: Op::Leaf, needs_grad: false });
        Var(self.nodes.len() - 1)
    }

    /// A free input whose gradient is reported by [`Gradients::wrt`].
    pub fn leaf(&mut self, m: Matrix) -> Var {
        self.nodes.push(Node { value: Cow::Owned(m), op: Op::Leaf, needs_grad: true });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, store: &'p ParamStore, id: ParamId) -> Var {
        self.nodes.push(Node { value: Cow::Borrowed(store.get(id)), op: Op::Param(id), needs_grad: true });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (x, y) = (self.value(a), self.value(b));
        if x.cols() != y.rows() {
            return Err(shape_err("matmul", x.shape(), y.shape()));
        }
        let out = x.matmul(y);
        Ok(self.push(out, Op::MatMul(a.0, b.0), &[a.0, b.0]))
    }

    /// `a @ b^T`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (x, y) = (self.value(a), self.value(b));
        if x.cols() != y.cols() {
            return Err(shape_err("matmul_nt", x.shape(), y.shape()));
        }
        let out = x.matmul_nt(y);
        Ok(self.push(out, Op::MatMulNt(a.0, b.0), &[a.0, b.0]))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose(a.0), &[a.0])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(shape_err("add", x.shape(), y.shape()));
        }
        let mut out = x.clone();
        out.add_assign(y);
        Ok(self.push(out, Op::Add(a.0, b.0), &[a.0, b.0]))
    }

    /// Add a `1 x cols` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, TensorError> {
        let (x, r) = (self.value(a), self.value(row));
        if r.rows() != 1 || r.cols() != x.cols() {
            return Err(shape_err("add_row", x.shape(), r.shape()));
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            out.row_mut(i).iter_mut().zip(r.data()).for_each(|(o, b)| *o += b);
        }
        Ok(self.push(out, Op::AddRow(a.0, row.0), &[a.0, row.0]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(shape_err("mul", x.shape(), y.shape()));
        }
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
        let out = Matrix::from_vec(x.rows(), x.cols(), data)?;
        Ok(self.push(out, Op::Mul(a.0, b.0), &[a.0, b.0]))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let mut out = self.value(a).clone();
        out.scale_in_place(c);
        self.push(out, Op::Scale(a.0, c), &[a.0])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        out.data_mut().iter_mut().for_each(|x| *x = x.max(0.0));
        self.push(out, Op::Relu(a.0), &[a.0])
    }

    /// Sum of all entries as a `1 x 1` scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Matrix::filled(1, 1, s), Op::Sum(a.0), &[a.0])
    }

    pub fn mean(&mut self, a: Var, axis: Axis) -> Var {
        let x = self.value(a);
        let out = match axis {
            Axis::Rows => {
                let n = x.rows() as f64;
                Matrix::from_fn(1, x.cols(), |_, j| (0..x.rows()).map(|i| x.get(i, j)).sum::<f64>() / n)
            }
            Axis::Cols => {
                let n = x.cols() as f64;
                Matrix::from_fn(x.rows(), 1, |i, _| x.row(i).iter().sum::<f64>() / n)
            }
        };
        self.push(out, Op::Mean(a.0, axis), &[a.0])
    }

    /// `weights^T @ a` as a `1 x cols` row. Rows with zero weight are never read.
    pub fn weighted_row_sum(&mut self, a: Var, weights: &[f64]) -> Result<Var, TensorError> {
        let x = self.value(a);
        if weights.len() != x.rows() {
            return Err(shape_err("weighted_row_sum", x.shape(), (weights.len(), 1)));
        }
        let w = Matrix::row_vector(weights.to_vec());
        let out = w.matmul(x);
        Ok(self.push(out, Op::WeightedRowSum(a.0, weights.to_vec()), &[a.0]))
    }

    /// Mean over the rows whose mask entry is set.
    pub fn masked_mean_rows(&mut self, a: Var, mask: &[bool]) -> Result<Var, TensorError> {
        let n = mask.iter().filter(|&&m| m).count();
        if n == 0 {
            return Err(TensorError::FullyMasked { row: 0 });
        }
        let w: Vec<f64> = mask.iter().map(|&m| if m { 1.0 / n as f64 } else { 0.0 }).collect();
        self.weighted_row_sum(a, &w)
    }

    pub fn concat(&mut self, parts: &[Var], axis: Axis) -> Result<Var, TensorError> {
        let first = self.shape(parts[0]);
        let out = match axis {
            Axis::Cols => {
                let mut cols = 0;
                for &p in parts {
                    let s = self.shape(p);
                    if s.0 != first.0 {
                        return Err(shape_err("concat", first, s));
                    }
                    cols += s.1;
                }
                let mut out = Matrix::zeros(first.0, cols);
                for i in 0..first.0 {
                    let mut off = 0;
                    for &p in parts {
                        let r = self.value(p).row(i);
                        out.row_mut(i)[off..off + r.len()].copy_from_slice(r);
                        off += r.len();
                    }
                }
                out
            }
            Axis::Rows => {
                let mut data = Vec::new();
                let mut rows = 0;
                for &p in parts {
                    let v = self.value(p);
                    if v.cols() != first.1 {
                        return Err(shape_err("concat", first, v.shape()));
                    }
                    rows += v.rows();
                    data.extend_from_slice(v.data());
                }
                Matrix::from_vec(rows, first.1, data)?
            }
        };
        let idx: Vec<usize> = parts.iter().map(|v| v.0).collect();
        Ok(self.push(out, Op::Concat(idx.clone(), axis), &idx))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let x = self.value(a);
        if start + len > x.cols() {
            return Err(TensorError::Index { op: "slice_cols", index: start + len, len: x.cols() });
        }
        let out = Matrix::from_fn(x.rows(), len, |i, j| x.get(i, start + j));
        Ok(self.push(out, Op::SliceCols(a.0, start), &[a.0]))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var, TensorError> {
        let x = self.value(a);
        if x.len() != rows * cols {
            return Err(shape_err("reshape", x.shape(), (rows, cols)));
        }
        let out = x.clone().reshaped(rows, cols);
        Ok(self.push(out, Op::Reshape(a.0), &[a.0]))
    }

    /// Rows of `table` by id; `None` yields a zero row.
    pub fn embedding_lookup(&mut self, table: Var, ids: &[Option<usize>]) -> Result<Var, TensorError> {
        let t = self.value(table);
        let mut out = Matrix::zeros(ids.len(), t.cols());
        for (i, id) in ids.iter().enumerate() {
            if let Some(id) = *id {
                if id >= t.rows() {
                    return Err(TensorError::Index { op: "embedding_lookup", index: id, len: t.rows() });
                }
                out.row_mut(i).copy_from_slice(t.row(id));
            }
        }
        Ok(self.push(out, Op::Gather(table.0, ids.to_vec()), &[table.0]))
    }

    /// Row-wise normalization to zero mean and unit variance, then `gain * x + bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var, TensorError> {
        let (v, g, b) = (self.value(x), self.value(gain), self.value(bias));
        if g.shape() != (1, v.cols()) || b.shape() != (1, v.cols()) {
            return Err(shape_err("layer_norm", v.shape(), g.shape()));
        }
        let n = v.cols() as f64;
        let mut xhat = Vec::with_capacity(v.len());
        let mut rstd = Vec::with_capacity(v.rows());
        let mut out = Matrix::zeros(v.rows(), v.cols());
        for i in 0..v.rows() {
            let row = v.row(i);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            let r = 1.0 / libm::sqrt(var + LN_EPS);
            rstd.push(r);
            for (j, x) in row.iter().enumerate() {
                let h = (x - mean) * r;
                xhat.push(h);
                out.set(i, j, g.data()[j] * h + b.data()[j]);
            }
        }
        let op = Op::LayerNorm { x: x.0, gain: gain.0, bias: bias.0, xhat, rstd };
        Ok(self.push(out, op, &[x.0, gain.0, bias.0]))
    }

    /// Softmax along each row over unmasked columns; masked entries are exactly 0.
    /// `mask` has one entry per column (shared by all rows) or one per element.
    pub fn masked_softmax(&mut self, x: Var, mask: &[bool]) -> Result<Var, TensorError> {
        let v = self.value(x);
        let per_row = if mask.len() == v.cols() {
            false
        } else if mask.len() == v.len() {
            true
        } else {
            return Err(shape_err("masked_softmax", v.shape(), (mask.len(), 1)));
        };
        let mut out = Matrix::zeros(v.rows(), v.cols());
        for i in 0..v.rows() {
            let m = if per_row { &mask[i * v.cols()..(i + 1) * v.cols()] } else { mask };
            let row = v.row(i);
            let max = row
                .iter()
                .zip(m)
                .filter(|(_, &keep)| keep)
                .map(|(&x, _)| x)
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return Err(TensorError::FullyMasked { row: i });
            }
            let o = out.row_mut(i);
            let mut z = 0.0;
            for j in 0..row.len() {
                if m[j] {
                    o[j] = libm::exp(row[j] - max);
                    z += o[j];
                }
            }
            o.iter_mut().for_each(|p| *p /= z);
        }
        Ok(self.push(out, Op::Softmax(x.0), &[x.0]))
    }

    /// Inverted dropout: survivors are scaled by `1 / (1 - rate)`. Identity when
    /// `train` is false or `rate` is 0.
    pub fn dropout(&mut self, x: Var, rate: f64, train: bool, seed: u64) -> Result<Var, TensorError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::DropoutRate(rate));
        }
        if !train || rate == 0.0 {
            return Ok(x);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keep = 1.0 / (1.0 - rate);
        let v = self.value(x);
        let scales: Vec<f64> = (0..v.len()).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }).collect();
        let data = v.data().iter().zip(&scales).map(|(a, s)| a * s).collect();
        let out = Matrix::from_vec(v.rows(), v.cols(), data)?;
        Ok(self.push(out, Op::Dropout(x.0, scales), &[x.0]))
    }

    /// `logsumexp(logits) - logits[target]` for a `1 x n` row.
    pub fn cross_entropy_logits(&mut self, logits: Var, target: usize) -> Result<Var, TensorError> {
        let v = self.value(logits);
        if v.rows() != 1 {
            return Err(shape_err("cross_entropy_logits", v.shape(), (1, v.cols())));
        }
        if target >= v.cols() {
            return Err(TensorError::Index { op: "cross_entropy_logits", index: target, len: v.cols() });
        }
        let max = v.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = v.data().iter().map(|x| libm::exp(x - max)).collect();
        let z: f64 = exps.iter().sum();
        let loss = max + libm::log(z) - v.data()[target];
        let probs = exps.into_iter().map(|e| e / z).collect();
        let op = Op::CrossEntropy { logits: logits.0, target, probs };
        Ok(self.push(Matrix::filled(1, 1, loss), op, &[logits.0]))
    }

    /// Reverse sweep from a `1 x 1` loss. Consumes the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients, TensorError> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(TensorError::NonScalarLoss(shape));
        }
        let nodes = self.nodes;
        let mut grads: Vec<Option<Matrix>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            if node.needs_grad {
                propagate(&nodes, i, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        let params = nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n.op {
                Op::Param(id) => Some((id, i)),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads, params })
    }
}

fn accumulate(grads: &mut [Option<Matrix>], nodes: &[Node<'_>], idx: usize, g: Matrix) {
    if !nodes[idx].needs_grad {
        return;
    }
    match &mut grads[idx] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn propagate(nodes: &[Node<'_>], i: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
    let val = |j: usize| -> &Matrix { &nodes[j].value };
    let wants = |j: usize| nodes[j].needs_grad;
    match &nodes[i].op {
        Op::Leaf | Op::Param(_) => {}
        &Op::MatMul(a, b) => {
            if wants(a) {
                accumulate(grads, nodes, a, g.matmul_nt(val(b)));
            }
            if wants(b) {
                accumulate(grads, nodes, b, val(a).matmul_tn(g));
            }
        }
        &Op::MatMulNt(a, b) => {
            if wants(a) {
                accumulate(grads, nodes, a, g.matmul(val(b)));
            }
            if wants(b) {
                accumulate(grads, nodes, b, g.matmul_tn(val(a)));
            }
        }
        &Op::Transpose(a) => accumulate(grads, nodes, a, g.transpose()),
        &Op::Add(a, b) => {
            accumulate(grads, nodes, a, g.clone());
            accumulate(grads, nodes, b, g.clone());
        }
        &Op::AddRow(a, r) => {
            accumulate(grads, nodes, a, g.clone());
            if wants(r) {
                let col = Matrix::from_fn(1, g.cols(), |_, j| (0..g.rows()).map(|k| g.get(k, j)).sum());
                accumulate(grads, nodes, r, col);
            }
        }
        &Op::Mul(a, b) => {
            let prod = |m: &Matrix| {
                let d = g.data().iter().zip(m.data()).map(|(x, y)| x * y).collect();
                Matrix::from_vec(g.rows(), g.cols(), d).expect("shape checked in forward")
            };
            if wants(a) {
                accumulate(grads, nodes, a, prod(val(b)));
            }
            if wants(b) {
                accumulate(grads, nodes, b, prod(val(a)));
            }
        }
        &Op::Scale(a, c) => {
            let mut d = g.clone();
            d.scale_in_place(c);
            accumulate(grads, nodes, a, d);
        }
        &Op::Relu(a) => {
            let x = val(a);
            let d = g.data().iter().zip(x.data()).map(|(gi, &xi)| if xi > 0.0 { *gi } else { 0.0 }).collect();
            accumulate(grads, nodes, a, Matrix::from_vec(g.rows(), g.cols(), d).expect("same shape"));
        }
        &Op::Sum(a) => {
            let (r, c) = val(a).shape();
            accumulate(grads, nodes, a, Matrix::filled(r, c, g.get(0, 0)));
        }
        &Op::Mean(a, axis) => {
            let (r, c) = val(a).shape();
            let d = match axis {
                Axis::Rows => Matrix::from_fn(r, c, |_, j| g.get(0, j) / r as f64),
                Axis::Cols => Matrix::from_fn(r, c, |i, _| g.get(i, 0) / c as f64),
            };
            accumulate(grads, nodes, a, d);
        }
        Op::WeightedRowSum(a, w) => {
            let (r, c) = val(*a).shape();
            let d = Matrix::from_fn(r, c, |i, j| if w[i] == 0.0 { 0.0 } else { w[i] * g.get(0, j) });
            accumulate(grads, nodes, *a, d);
        }
        Op::Concat(parts, axis) => {
            let mut off = 0;
            for &p in parts {
                let (r, c) = val(p).shape();
                let d = match axis {
                    Axis::Cols => Matrix::from_fn(r, c, |x, y| g.get(x, off + y)),
                    Axis::Rows => Matrix::from_fn(r, c, |x, y| g.get(off + x, y)),
                };
                off += if *axis == Axis::Cols { c } else { r };
                accumulate(grads, nodes, p, d);
            }
        }
        &Op::SliceCols(a, start) => {
            let (r, c) = val(a).shape();
            let mut d = Matrix::zeros(r, c);
            for x in 0..r {
                d.row_mut(x)[start..start + g.cols()].copy_from_slice(g.row(x));
            }
            accumulate(grads, nodes, a, d);
        }
        &Op::Reshape(a) => {
            let (r, c) = val(a).shape();
            accumulate(grads, nodes, a, g.clone().reshaped(r, c));
        }
        Op::Gather(t, ids) => {
            let (r, c) = val(*t).shape();
            let mut d = Matrix::zeros(r, c);
            for (row, id) in ids.iter().enumerate() {
                if let Some(id) = *id {
                    d.row_mut(id).iter_mut().zip(g.row(row)).for_each(|(a, b)| *a += b);
                }
            }
            accumulate(grads, nodes, *t, d);
        }
        Op::LayerNorm { x, gain, bias, xhat, rstd } => {
            let (r, c) = g.shape();
            let gv = val(*gain).data();
            if wants(*x) {
                let mut d = Matrix::zeros(r, c);
                for i in 0..r {
                    let h = &xhat[i * c..(i + 1) * c];
                    let dh: Vec<f64> = (0..c).map(|j| g.get(i, j) * gv[j]).collect();
                    let m1 = dh.iter().sum::<f64>() / c as f64;
                    let m2 = dh.iter().zip(h).map(|(a, b)| a * b).sum::<f64>() / c as f64;
                    for j in 0..c {
                        d.set(i, j, rstd[i] * (dh[j] - m1 - h[j] * m2));
                    }
                }
                accumulate(grads, nodes, *x, d);
            }
            if wants(*gain) {
                let d = Matrix::from_fn(1, c, |_, j| (0..r).map(|i| g.get(i, j) * xhat[i * c + j]).sum());
                accumulate(grads, nodes, *gain, d);
            }
            if wants(*bias) {
                let d = Matrix::from_fn(1, c, |_, j| (0..r).map(|i| g.get(i, j)).sum());
                accumulate(grads, nodes, *bias, d);
            }
        }
        &Op::Softmax(a) => {
            let p = &nodes[i].value;
            let mut d = Matrix::zeros(p.rows(), p.cols());
            for row in 0..p.rows() {
                let pr = p.row(row);
                let gr = g.row(row);
                let s: f64 = pr.iter().zip(gr).map(|(x, y)| x * y).sum();
                d.row_mut(row).iter_mut().enumerate().for_each(|(j, o)| *o = pr[j] * (gr[j] - s));
            }
            accumulate(grads, nodes, a, d);
        }
        Op::Dropout(a, scales) => {
            let d = g.data().iter().zip(scales).map(|(x, s)| x * s).collect();
            accumulate(grads, nodes, *a, Matrix::from_vec(g.rows(), g.cols(), d).expect("same shape"));
        }
        Op::CrossEntropy { logits, target, probs } => {
            let s = g.get(0, 0);
            let mut d = Matrix::row_vector(probs.iter().map(|p| p * s).collect());
            d.data_mut()[*target] -= s;
            accumulate(grads, nodes, *logits, d);
        }
    }
}

/// Gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    params: Vec<(ParamId, usize)>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Matrix> {
        self.grads[v.0].as_ref()
    }

    /// Add parameter gradients into `out` (a parameter used twice is summed).
    pub fn accumulate_into(&self, out: &mut ParamGrads) {
        for &(id, node) in &self.params {
            if let Some(g) = &self.grads[node] {
                out.get_mut(id).add_assign(g);
            }
        }
    }

    pub fn into_param_grads(self, store: &ParamStore) -> ParamGrads {
        let mut out = ParamGrads::zeros_like(store);
        self.accumulate_into(&mut out);
        out
    }
}
