//! Define-by-run reverse-mode differentiation over dense matrices.
//!
//! Every operator appends one node to the [`Tape`]. A node whose inputs do
//! not require gradients is stored as a constant and never revisited by
//! [`Tape::backward`]. The tape is rebuilt for each forward pass.

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Tensor(usize);

impl Tensor {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise function paired with its derivative, for custom unary nodes.
#[derive(Clone, Copy)]
pub struct UnaryRule {
    pub forward: fn(f64) -> f64,
    pub derivative: fn(f64) -> f64,
}

#[derive(Clone)]
enum Op {
    Leaf,
    MatMul(Tensor, Tensor),
    Add(Tensor, Tensor),
    AddRowBroadcast(Tensor, Tensor),
    Mul(Tensor, Tensor),
    Scale(Tensor, f64),
    ConcatRows(Vec<Tensor>),
    ConcatCols(Vec<Tensor>),
    InterleaveCols(Tensor, Tensor),
    Transpose(Tensor),
    SliceRows(Tensor, usize),
    GatherRows(Tensor, Vec<usize>),
    Relu(Tensor),
    Sigmoid(Tensor),
    LogSigmoid(Tensor),
    Cos(Tensor),
    Sin(Tensor),
    SoftmaxRows(Tensor),
    SumRows(Tensor),
    SumCols(Tensor),
    Sum(Tensor),
    Unary(Tensor, UnaryRule),
}

struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of operations. Inputs of a node always precede it.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Matrix>>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(sigmoid(x))` without overflow for large `|x|`.
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
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

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Tensor {
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Tensor(self.nodes.len() - 1)
    }

    fn rg(&self, t: Tensor) -> bool {
        self.nodes[t.0].requires_grad
    }

    /// Records a trainable leaf.
    pub fn param(&mut self, value: Matrix) -> Tensor {
        self.push(value, Op::Leaf, true)
    }

    /// Records a constant leaf.
    pub fn constant(&mut self, value: Matrix) -> Tensor {
        self.push(value, Op::Leaf, false)
    }

    pub fn leaf(&mut self, value: Matrix, requires_grad: bool) -> Tensor {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn value(&self, t: Tensor) -> &Matrix {
        &self.nodes[t.0].value
    }

    pub fn shape(&self, t: Tensor) -> (usize, usize) {
        self.nodes[t.0].value.shape()
    }

    pub fn requires_grad(&self, t: Tensor) -> bool {
        self.rg(t)
    }

    /// Gradient of the last [`backward`](Self::backward) loss with respect to `t`.
    pub fn grad(&self, t: Tensor) -> Option<&Matrix> {
        self.grads.get(t.0).and_then(|g| g.as_ref())
    }

    pub fn matmul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    /// Elementwise sum. `b` may also be a `1 x cols` row added to every row of `a`.
    pub fn add(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let rg = self.rg(a) || self.rg(b);
        if sa == sb {
            let mut value = self.value(a).clone();
            value.add_assign(self.value(b));
            Ok(self.push(value, Op::Add(a, b), rg))
        } else if sb.0 == 1 && sb.1 == sa.1 {
            let mut value = self.value(a).clone();
            let row = self.value(b).data().to_vec();
            for r in 0..sa.0 {
                for (c, x) in row.iter().enumerate() {
                    let v = value.get(r, c) + x;
                    value.set(r, c, v);
                }
            }
            Ok(self.push(value, Op::AddRowBroadcast(a, b), rg))
        } else {
            Err(Error::Dimension {
                op: "add",
                left: sa,
                right: sb,
            })
        }
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::Dimension {
                op: "mul",
                left: sa,
                right: sb,
            });
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let value = Matrix::from_vec(sa.0, sa.1, data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Tensor, factor: f64) -> Tensor {
        let value = self.value(a).map(|x| x * factor);
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, factor), rg)
    }

    /// Stacks the inputs vertically. All inputs need the same column count.
    pub fn concat_rows(&mut self, parts: &[Tensor]) -> Result<Tensor> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Contract("concat_rows of nothing".into()))?;
        let cols = self.shape(first).1;
        let mut rows = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.1 != cols {
                return Err(Error::Dimension {
                    op: "concat_rows",
                    left: self.shape(first),
                    right: s,
                });
            }
            rows += s.0;
        }
        let mut data = Vec::with_capacity(rows * cols);
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        let value = Matrix::from_vec(rows, cols, data)?;
        Ok(self.push(value, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Places the inputs side by side. All inputs need the same row count.
    pub fn concat_cols(&mut self, parts: &[Tensor]) -> Result<Tensor> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Contract("concat_cols of nothing".into()))?;
        let rows = self.shape(first).0;
        let mut cols = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.0 != rows {
                return Err(Error::Dimension {
                    op: "concat_cols",
                    left: self.shape(first),
                    right: s,
                });
            }
            cols += s.1;
        }
        let mut value = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let m = &self.nodes[p.0].value;
            for r in 0..rows {
                let src = m.row(r);
                value.data_mut()[r * cols + offset..r * cols + offset + src.len()]
                    .copy_from_slice(src);
            }
            offset += m.cols();
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// `[a0, b0, a1, b1, ...]` column interleave of two equally shaped inputs.
    pub fn interleave_cols(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::Dimension {
                op: "interleave_cols",
                left: sa,
                right: sb,
            });
        }
        let (rows, cols) = sa;
        let mut value = Matrix::zeros(rows, 2 * cols);
        for r in 0..rows {
            for c in 0..cols {
                value.set(r, 2 * c, self.value(a).get(r, c));
                value.set(r, 2 * c + 1, self.value(b).get(r, c));
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::InterleaveCols(a, b), rg))
    }

    pub fn transpose(&mut self, a: Tensor) -> Tensor {
        let value = self.value(a).transpose();
        let rg = self.rg(a);
        self.push(value, Op::Transpose(a), rg)
    }

    /// Rows `start..end` of `a`.
    pub fn slice_rows(&mut self, a: Tensor, start: usize, end: usize) -> Result<Tensor> {
        let (rows, cols) = self.shape(a);
        if start >= end || end > rows {
            return Err(Error::Contract(format!(
                "row slice {start}..{end} out of range for {rows}x{cols}"
            )));
        }
        let data = self.value(a).data()[start * cols..end * cols].to_vec();
        let value = Matrix::from_vec(end - start, cols, data)?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::SliceRows(a, start), rg))
    }

    /// Selects rows of `a` by index; indices may repeat.
    pub fn gather_rows(&mut self, a: Tensor, indices: &[usize]) -> Result<Tensor> {
        let (rows, cols) = self.shape(a);
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            if i >= rows {
                return Err(Error::Contract(format!(
                    "row index {i} out of range for {rows}x{cols}"
                )));
            }
            data.extend_from_slice(self.value(a).row(i));
        }
        let value = Matrix::from_vec(indices.len(), cols, data)?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::GatherRows(a, indices.to_vec()), rg))
    }

    pub fn relu(&mut self, a: Tensor) -> Tensor {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        let rg = self.rg(a);
        self.push(value, Op::Relu(a), rg)
    }

    pub fn sigmoid(&mut self, a: Tensor) -> Tensor {
        let value = self.value(a).map(sigmoid);
        let rg = self.rg(a);
        self.push(value, Op::Sigmoid(a), rg)
    }

    /// Numerically stable `log(sigmoid(a))`.
    pub fn log_sigmoid(&mut self, a: Tensor) -> Tensor {
        let value = self.value(a).map(log_sigmoid);
        let rg = self.rg(a);
        self.push(value, Op::LogSigmoid(a), rg)
    }

    pub fn cos(&mut self, a: Tensor) -> Tensor {
        let value = self.value(a).map(f64::cos);
        let rg = self.rg(a);
        self.push(value, Op::Cos(a), rg)
    }

    pub fn sin(&mut self, a: Tensor) -> Tensor {
        let value = self.value(a).map(f64::sin);
        let rg = self.rg(a);
        self.push(value, Op::Sin(a), rg)
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, a: Tensor) -> Tensor {
        let src = self.value(a);
        let (rows, cols) = src.shape();
        let mut value = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let row = src.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for (c, &x) in row.iter().enumerate() {
                let e = (x - max).exp();
                value.set(r, c, e);
                total += e;
            }
            for c in 0..cols {
                let v = value.get(r, c) / total;
                value.set(r, c, v);
            }
        }
        let rg = self.rg(a);
        self.push(value, Op::SoftmaxRows(a), rg)
    }

    /// Adds the rows together: `r x c -> 1 x c`.
    pub fn sum_rows(&mut self, a: Tensor) -> Tensor {
        let src = self.value(a);
        let mut value = Matrix::zeros(1, src.cols());
        for r in 0..src.rows() {
            for (o, x) in value.data_mut().iter_mut().zip(src.row(r)) {
                *o += x;
            }
        }
        let rg = self.rg(a);
        self.push(value, Op::SumRows(a), rg)
    }

    /// Adds the columns together: `r x c -> r x 1`.
    pub fn sum_cols(&mut self, a: Tensor) -> Tensor {
        let src = self.value(a);
        let data = (0..src.rows()).map(|r| src.row(r).iter().sum()).collect();
        let value = Matrix::col_vector(data);
        let rg = self.rg(a);
        self.push(value, Op::SumCols(a), rg)
    }

    /// Sum of every entry as a `1 x 1` tensor.
    pub fn sum(&mut self, a: Tensor) -> Tensor {
        let value = Matrix::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(value, Op::Sum(a), rg)
    }

    /// Elementwise function with a caller-supplied derivative.
    pub fn unary(&mut self, a: Tensor, rule: UnaryRule) -> Tensor {
        let value = self.value(a).map(rule.forward);
        let rg = self.rg(a);
        self.push(value, Op::Unary(a, rule), rg)
    }

    fn accumulate(&mut self, t: Tensor, g: Matrix) {
        if !self.nodes[t.0].requires_grad {
            return;
        }
        match &mut self.grads[t.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    /// Propagates gradients from a `1 x 1` loss to every node that requires them.
    /// Gradients from previous calls are discarded.
    pub fn backward(&mut self, loss: Tensor) -> Result<()> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got {}x{}",
                shape.0, shape.1
            )));
        }
        self.grads = vec![None; self.nodes.len()];
        if !self.rg(loss) {
            return Ok(());
        }
        self.grads[loss.0] = Some(Matrix::scalar(1.0));

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            let op = self.nodes[i].op.clone();
            self.propagate(i, &op, &g);
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn propagate(&mut self, i: usize, op: &Op, g: &Matrix) {
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    let da = g.mul_raw(&self.value(*b).transpose());
                    self.accumulate(*a, da);
                }
                if self.rg(*b) {
                    let db = self.value(*a).transpose().mul_raw(g);
                    self.accumulate(*b, db);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(*a, g.clone());
                self.accumulate(*b, g.clone());
            }
            Op::AddRowBroadcast(a, b) => {
                self.accumulate(*a, g.clone());
                if self.rg(*b) {
                    let mut db = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, x) in db.data_mut().iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    self.accumulate(*b, db);
                }
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    let da = zip_map(g, self.value(*b), |g, y| g * y);
                    self.accumulate(*a, da);
                }
                if self.rg(*b) {
                    let db = zip_map(g, self.value(*a), |g, x| g * x);
                    self.accumulate(*b, db);
                }
            }
            Op::Scale(a, s) => {
                let s = *s;
                self.accumulate(*a, g.map(|x| x * s));
            }
            Op::ConcatRows(parts) => {
                let cols = g.cols();
                let mut offset = 0;
                for &p in parts {
                    let rows = self.shape(p).0;
                    if self.rg(p) {
                        let data = g.data()[offset * cols..(offset + rows) * cols].to_vec();
                        let piece = Matrix::from_vec(rows, cols, data).expect("shape");
                        self.accumulate(p, piece);
                    }
                    offset += rows;
                }
            }
            Op::ConcatCols(parts) => {
                let (rows, total) = g.shape();
                let mut offset = 0;
                for &p in parts {
                    let cols = self.shape(p).1;
                    if self.rg(p) {
                        let mut piece = Matrix::zeros(rows, cols);
                        for r in 0..rows {
                            piece.data_mut()[r * cols..(r + 1) * cols].copy_from_slice(
                                &g.data()[r * total + offset..r * total + offset + cols],
                            );
                        }
                        self.accumulate(p, piece);
                    }
                    offset += cols;
                }
            }
            Op::InterleaveCols(a, b) => {
                let (rows, cols) = self.shape(*a);
                let mut da = Matrix::zeros(rows, cols);
                let mut db = Matrix::zeros(rows, cols);
                for r in 0..rows {
                    for c in 0..cols {
                        da.set(r, c, g.get(r, 2 * c));
                        db.set(r, c, g.get(r, 2 * c + 1));
                    }
                }
                self.accumulate(*a, da);
                self.accumulate(*b, db);
            }
            Op::Transpose(a) => self.accumulate(*a, g.transpose()),
            Op::SliceRows(a, start) => {
                let (rows, cols) = self.shape(*a);
                let mut da = Matrix::zeros(rows, cols);
                da.data_mut()[start * cols..start * cols + g.len()].copy_from_slice(g.data());
                self.accumulate(*a, da);
            }
            Op::GatherRows(a, indices) => {
                let (rows, cols) = self.shape(*a);
                let mut da = Matrix::zeros(rows, cols);
                for (k, &idx) in indices.iter().enumerate() {
                    for c in 0..cols {
                        let v = da.get(idx, c) + g.get(k, c);
                        da.set(idx, c, v);
                    }
                }
                self.accumulate(*a, da);
            }
            Op::Relu(a) => {
                let da = zip_map(g, self.value(*a), |g, x| if x > 0.0 { g } else { 0.0 });
                self.accumulate(*a, da);
            }
            Op::Sigmoid(a) => {
                let y = &self.nodes[i].value;
                let da = zip_map(g, y, |g, y| g * y * (1.0 - y));
                self.accumulate(*a, da);
            }
            Op::LogSigmoid(a) => {
                let da = zip_map(g, self.value(*a), |g, x| g * sigmoid(-x));
                self.accumulate(*a, da);
            }
            Op::Cos(a) => {
                let da = zip_map(g, self.value(*a), |g, x| -g * x.sin());
                self.accumulate(*a, da);
            }
            Op::Sin(a) => {
                let da = zip_map(g, self.value(*a), |g, x| g * x.cos());
                self.accumulate(*a, da);
            }
            Op::SoftmaxRows(a) => {
                let y = &self.nodes[i].value;
                let (rows, cols) = y.shape();
                let mut da = Matrix::zeros(rows, cols);
                for r in 0..rows {
                    let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(g, y)| g * y).sum();
                    for c in 0..cols {
                        da.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                    }
                }
                self.accumulate(*a, da);
            }
            Op::SumRows(a) => {
                let (rows, cols) = self.shape(*a);
                let mut da = Matrix::zeros(rows, cols);
                for r in 0..rows {
                    da.data_mut()[r * cols..(r + 1) * cols].copy_from_slice(g.data());
                }
                self.accumulate(*a, da);
            }
            Op::SumCols(a) => {
                let (rows, cols) = self.shape(*a);
                let mut da = Matrix::zeros(rows, cols);
                for r in 0..rows {
                    let v = g.get(r, 0);
                    da.data_mut()[r * cols..(r + 1) * cols].fill(v);
                }
                self.accumulate(*a, da);
            }
            Op::Sum(a) => {
                let (rows, cols) = self.shape(*a);
                self.accumulate(*a, Matrix::filled(rows, cols, g.get(0, 0)));
            }
            Op::Unary(a, rule) => {
                let d = rule.derivative;
                let da = zip_map(g, self.value(*a), |g, x| g * d(x));
                self.accumulate(*a, da);
            }
        }
    }
}

fn zip_map(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Matrix::from_vec(a.rows(), a.cols(), data).expect("zip_map on equal shapes")
}
