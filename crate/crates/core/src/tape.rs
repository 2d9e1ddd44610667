//! Reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Tape`] is a Wengert list: every operation appends a node holding
//! its inputs and the computed value, and [`Tape::backward`] walks the
//! list in reverse accumulating adjoints.  Construction order is the
//! topological order, so no explicit sort is needed.
//!
//! The op set is exactly what the recurrent autoencoder and the small
//! forecaster need: elementwise arithmetic and activations, matrix
//! multiply, transpose, row softmax, concatenation/slicing/stacking,
//! full-tensor reductions, and a broadcast bias add.  Each op validates
//! shapes on entry and reports mismatches as structured errors naming
//! the operation and both shapes.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ValueId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(ValueId, ValueId),
    Sub(ValueId, ValueId),
    Mul(ValueId, ValueId),
    MatMul(ValueId, ValueId),
    Transpose(ValueId),
    Sigmoid(ValueId),
    Tanh(ValueId),
    Exp(ValueId),
    Log(ValueId),
    Scale(ValueId, f64),
    /// Adds a compile-time constant; the constant itself is not needed
    /// for the backward pass, so only the input id is kept.
    AddScalar(ValueId),
    SoftmaxRows(ValueId),
    ConcatCols(ValueId, ValueId),
    StackRows(Vec<ValueId>),
    SliceRows(ValueId, usize, usize),
    SliceCols(ValueId, usize, usize),
    SumAll(ValueId),
    MeanAll(ValueId),
    /// value = a + b broadcast over rows; a is n x c, b is 1 x c.
    AddRowBroadcast(ValueId, ValueId),
}

pub struct Tape {
    ops: Vec<Op>,
    values: Vec<Tensor>,
}

/// Adjoints produced by [`Tape::backward`], indexed by [`ValueId`].
pub struct Gradients {
    adj: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the scalar output with respect to `id`; zeros if the
    /// value does not influence the output.
    pub fn wrt(&self, id: ValueId, tape: &Tape) -> Tensor {
        match &self.adj[id.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(tape.value(id).shape()),
        }
    }
}

fn shape_err(op: &str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::numerical(format!(
        "{op}: incompatible shapes {lhs:?} and {rhs:?}"
    ))
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            ops: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn value(&self, id: ValueId) -> &Tensor {
        &self.values[id.0]
    }

    fn push(&mut self, op: Op, value: Tensor) -> ValueId {
        self.ops.push(op);
        self.values.push(value);
        ValueId(self.ops.len() - 1)
    }

    /// Register an input value.  Leaves are the only nodes whose
    /// gradients are usually read back; parameters and constants are
    /// both leaves — the caller decides which ids to query.
    pub fn leaf(&mut self, value: Tensor) -> ValueId {
        self.push(Op::Leaf, value)
    }

    // ── Elementwise binary ──────────────────────────────────────────

    fn check_same_shape(&self, op: &str, a: ValueId, b: ValueId) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(shape_err(op, sa, sb));
        }
        Ok(())
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.check_same_shape("add", a, b)?;
        let v = zip_map(self.value(a), self.value(b), |x, y| x + y);
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn sub(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.check_same_shape("sub", a, b)?;
        let v = zip_map(self.value(a), self.value(b), |x, y| x - y);
        Ok(self.push(Op::Sub(a, b), v))
    }

    pub fn mul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.check_same_shape("mul", a, b)?;
        let v = zip_map(self.value(a), self.value(b), |x, y| x * y);
        Ok(self.push(Op::Mul(a, b), v))
    }

    // ── Matrix ops ──────────────────────────────────────────────────

    pub fn matmul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if !ta.is_matrix() || !tb.is_matrix() || ta.cols() != tb.rows() {
            return Err(shape_err("matmul", ta.shape(), tb.shape()));
        }
        let v = matmul_raw(ta, tb);
        Ok(self.push(Op::MatMul(a, b), v))
    }

    pub fn transpose(&mut self, a: ValueId) -> Result<ValueId> {
        let ta = self.value(a);
        if !ta.is_matrix() {
            return Err(shape_err("transpose", ta.shape(), &[]));
        }
        let v = transpose_raw(ta);
        Ok(self.push(Op::Transpose(a), v))
    }

    // ── Activations / elementwise unary ─────────────────────────────

    pub fn sigmoid(&mut self, a: ValueId) -> Result<ValueId> {
        let v = self.value(a).map(|x| 1.0 / (1.0 + (-x).exp()));
        Ok(self.push(Op::Sigmoid(a), v))
    }

    pub fn tanh(&mut self, a: ValueId) -> Result<ValueId> {
        let v = self.value(a).map(f64::tanh);
        Ok(self.push(Op::Tanh(a), v))
    }

    pub fn exp(&mut self, a: ValueId) -> Result<ValueId> {
        let v = self.value(a).map(f64::exp);
        Ok(self.push(Op::Exp(a), v))
    }

    pub fn log(&mut self, a: ValueId) -> Result<ValueId> {
        let v = self.value(a).map(f64::ln);
        Ok(self.push(Op::Log(a), v))
    }

    pub fn scale(&mut self, a: ValueId, k: f64) -> Result<ValueId> {
        let v = self.value(a).map(|x| k * x);
        Ok(self.push(Op::Scale(a, k), v))
    }

    pub fn add_scalar(&mut self, a: ValueId, k: f64) -> Result<ValueId> {
        let v = self.value(a).map(|x| x + k);
        Ok(self.push(Op::AddScalar(a), v))
    }

    // ── Softmax ─────────────────────────────────────────────────────

    /// Row-wise softmax with max subtraction for stability.
    pub fn softmax_rows(&mut self, a: ValueId) -> Result<ValueId> {
        let ta = self.value(a);
        if !ta.is_matrix() {
            return Err(shape_err("softmax_rows", ta.shape(), &[]));
        }
        let (rows, cols) = (ta.rows(), ta.cols());
        let mut v = Tensor::zeros(&[rows, cols]);
        for r in 0..rows {
            let row = ta.row_slice(r);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for c in 0..cols {
                let e = (row[c] - m).exp();
                v.set(r, c, e);
                sum += e;
            }
            for c in 0..cols {
                let e = v.at(r, c);
                v.set(r, c, e / sum);
            }
        }
        Ok(self.push(Op::SoftmaxRows(a), v))
    }

    // ── Structure ops ───────────────────────────────────────────────

    pub fn concat_cols(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if !ta.is_matrix() || !tb.is_matrix() || ta.rows() != tb.rows() {
            return Err(shape_err("concat_cols", ta.shape(), tb.shape()));
        }
        let (rows, ca, cb) = (ta.rows(), ta.cols(), tb.cols());
        let mut v = Tensor::zeros(&[rows, ca + cb]);
        for r in 0..rows {
            v.data_mut()[r * (ca + cb)..r * (ca + cb) + ca].copy_from_slice(ta.row_slice(r));
            v.data_mut()[r * (ca + cb) + ca..(r + 1) * (ca + cb)].copy_from_slice(tb.row_slice(r));
        }
        Ok(self.push(Op::ConcatCols(a, b), v))
    }

    /// Stack matrices vertically; all inputs must share a column count.
    pub fn stack_rows(&mut self, ids: &[ValueId]) -> Result<ValueId> {
        if ids.is_empty() {
            return Err(Error::numerical("stack_rows: no inputs"));
        }
        let cols = self.value(ids[0]).cols();
        let mut total_rows = 0;
        for &id in ids {
            let t = self.value(id);
            if !t.is_matrix() || t.cols() != cols {
                return Err(shape_err("stack_rows", &[cols], t.shape()));
            }
            total_rows += t.rows();
        }
        let mut data = Vec::with_capacity(total_rows * cols);
        for &id in ids {
            data.extend_from_slice(self.value(id).data());
        }
        let v = Tensor::new(vec![total_rows, cols], data)?;
        Ok(self.push(Op::StackRows(ids.to_vec()), v))
    }

    pub fn slice_rows(&mut self, a: ValueId, start: usize, end: usize) -> Result<ValueId> {
        let ta = self.value(a);
        if !ta.is_matrix() || start >= end || end > ta.rows() {
            return Err(Error::numerical(format!(
                "slice_rows: range {start}..{end} invalid for shape {:?}",
                ta.shape()
            )));
        }
        let cols = ta.cols();
        let data = ta.data()[start * cols..end * cols].to_vec();
        let v = Tensor::new(vec![end - start, cols], data)?;
        Ok(self.push(Op::SliceRows(a, start, end), v))
    }

    pub fn slice_cols(&mut self, a: ValueId, start: usize, end: usize) -> Result<ValueId> {
        let ta = self.value(a);
        if !ta.is_matrix() || start >= end || end > ta.cols() {
            return Err(Error::numerical(format!(
                "slice_cols: range {start}..{end} invalid for shape {:?}",
                ta.shape()
            )));
        }
        let (rows, cols) = (ta.rows(), ta.cols());
        let mut data = Vec::with_capacity(rows * (end - start));
        for r in 0..rows {
            data.extend_from_slice(&ta.data()[r * cols + start..r * cols + end]);
        }
        let v = Tensor::new(vec![rows, end - start], data)?;
        Ok(self.push(Op::SliceCols(a, start, end), v))
    }

    // ── Reductions ──────────────────────────────────────────────────

    pub fn sum_all(&mut self, a: ValueId) -> Result<ValueId> {
        let s: f64 = self.value(a).iter().sum();
        Ok(self.push(Op::SumAll(a), Tensor::scalar(s)))
    }

    pub fn mean_all(&mut self, a: ValueId) -> Result<ValueId> {
        let t = self.value(a);
        if t.is_empty() {
            return Err(Error::numerical("mean_all: empty tensor"));
        }
        let s: f64 = t.iter().sum();
        let n = t.len() as f64;
        Ok(self.push(Op::MeanAll(a), Tensor::scalar(s / n)))
    }

    // ── Broadcast bias ──────────────────────────────────────────────

    /// a (n x c) + b (1 x c) broadcast down the rows.
    pub fn add_row_broadcast(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if !ta.is_matrix() || !tb.is_matrix() || tb.rows() != 1 || ta.cols() != tb.cols() {
            return Err(shape_err("add_row_broadcast", ta.shape(), tb.shape()));
        }
        let (rows, cols) = (ta.rows(), ta.cols());
        let mut v = ta.clone();
        for r in 0..rows {
            for c in 0..cols {
                let x = v.at(r, c) + tb.at(0, c);
                v.set(r, c, x);
            }
        }
        let _ = rows;
        Ok(self.push(Op::AddRowBroadcast(a, b), v))
    }

    // ── Backward ────────────────────────────────────────────────────

    /// Accumulate adjoints of a scalar `output` with respect to every
    /// node on the tape.
    pub fn backward(&self, output: ValueId) -> Result<Gradients> {
        if self.value(output).len() != 1 {
            return Err(Error::numerical(format!(
                "backward: output must be scalar, got shape {:?}",
                self.value(output).shape()
            )));
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; self.ops.len()];
        adj[output.0] = Some(Tensor::new(
            self.value(output).shape().to_vec(),
            vec![1.0],
        )?);

        for i in (0..=output.0).rev() {
            // Inputs always have smaller ids than the node that uses
            // them, so the slice split below lets us read this node's
            // adjoint while accumulating into its inputs'.
            let (before, rest) = adj.split_at_mut(i);
            let dy = match &rest[0] {
                Some(g) => g,
                None => continue,
            };
            let adj = before;
            match &self.ops[i] {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    accumulate(adj, *a, &dy, self);
                    accumulate(adj, *b, &dy, self);
                }
                Op::Sub(a, b) => {
                    accumulate(adj, *a, &dy, self);
                    let neg = dy.map(|v| -v);
                    accumulate(adj, *b, &neg, self);
                }
                Op::Mul(a, b) => {
                    let da = zip_map(&dy, self.value(*b), |g, y| g * y);
                    let db = zip_map(&dy, self.value(*a), |g, x| g * x);
                    accumulate(adj, *a, &da, self);
                    accumulate(adj, *b, &db, self);
                }
                Op::MatMul(a, b) => {
                    let bt = transpose_raw(self.value(*b));
                    let at = transpose_raw(self.value(*a));
                    let da = matmul_raw(&dy, &bt);
                    let db = matmul_raw(&at, &dy);
                    accumulate(adj, *a, &da, self);
                    accumulate(adj, *b, &db, self);
                }
                Op::Transpose(a) => {
                    let da = transpose_raw(&dy);
                    accumulate(adj, *a, &da, self);
                }
                Op::Sigmoid(a) => {
                    let y = &self.values[i];
                    let da = zip_map(&dy, y, |g, s| g * s * (1.0 - s));
                    accumulate(adj, *a, &da, self);
                }
                Op::Tanh(a) => {
                    let y = &self.values[i];
                    let da = zip_map(&dy, y, |g, t| g * (1.0 - t * t));
                    accumulate(adj, *a, &da, self);
                }
                Op::Exp(a) => {
                    let y = &self.values[i];
                    let da = zip_map(&dy, y, |g, e| g * e);
                    accumulate(adj, *a, &da, self);
                }
                Op::Log(a) => {
                    let x = self.value(*a);
                    let da = zip_map(&dy, x, |g, v| g / v);
                    accumulate(adj, *a, &da, self);
                }
                Op::Scale(a, k) => {
                    let da = dy.map(|g| g * k);
                    accumulate(adj, *a, &da, self);
                }
                Op::AddScalar(a) => {
                    accumulate(adj, *a, &dy, self);
                }
                Op::SoftmaxRows(a) => {
                    // dx_r = y_r * (dy_r - <dy_r, y_r>)
                    let y = &self.values[i];
                    let (rows, cols) = (y.rows(), y.cols());
                    let mut da = Tensor::zeros(&[rows, cols]);
                    for r in 0..rows {
                        let yr = y.row_slice(r);
                        let gr = dy.row_slice(r);
                        let dot: f64 = yr.iter().zip(gr).map(|(v, g)| v * g).sum();
                        for c in 0..cols {
                            da.set(r, c, yr[c] * (gr[c] - dot));
                        }
                    }
                    accumulate(adj, *a, &da, self);
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.value(*a).cols();
                    let (rows, cols) = (dy.rows(), dy.cols());
                    let mut da = Tensor::zeros(&[rows, ca]);
                    let mut db = Tensor::zeros(&[rows, cols - ca]);
                    for r in 0..rows {
                        for c in 0..ca {
                            da.set(r, c, dy.at(r, c));
                        }
                        for c in ca..cols {
                            db.set(r, c - ca, dy.at(r, c));
                        }
                    }
                    accumulate(adj, *a, &da, self);
                    accumulate(adj, *b, &db, self);
                }
                Op::StackRows(ids) => {
                    let mut offset = 0;
                    for &id in ids {
                        let rows = self.value(id).rows();
                        let cols = self.value(id).cols();
                        let mut part = Tensor::zeros(&[rows, cols]);
                        for r in 0..rows {
                            for c in 0..cols {
                                part.set(r, c, dy.at(offset + r, c));
                            }
                        }
                        accumulate(adj, id, &part, self);
                        offset += rows;
                    }
                }
                Op::SliceRows(a, start, _end) => {
                    let src = self.value(*a);
                    let mut da = Tensor::zeros(src.shape());
                    for r in 0..dy.rows() {
                        for c in 0..dy.cols() {
                            da.set(start + r, c, dy.at(r, c));
                        }
                    }
                    accumulate(adj, *a, &da, self);
                }
                Op::SliceCols(a, start, _end) => {
                    let src = self.value(*a);
                    let mut da = Tensor::zeros(src.shape());
                    for r in 0..dy.rows() {
                        for c in 0..dy.cols() {
                            da.set(r, start + c, dy.at(r, c));
                        }
                    }
                    accumulate(adj, *a, &da, self);
                }
                Op::SumAll(a) => {
                    let g = dy.data()[0];
                    let da = Tensor::full(self.value(*a).shape(), g);
                    accumulate(adj, *a, &da, self);
                }
                Op::MeanAll(a) => {
                    let n = self.value(*a).len() as f64;
                    let g = dy.data()[0] / n;
                    let da = Tensor::full(self.value(*a).shape(), g);
                    accumulate(adj, *a, &da, self);
                }
                Op::AddRowBroadcast(a, b) => {
                    accumulate(adj, *a, &dy, self);
                    let cols = dy.cols();
                    let mut db = Tensor::zeros(&[1, cols]);
                    for r in 0..dy.rows() {
                        for c in 0..cols {
                            db.set(0, c, db.at(0, c) + dy.at(r, c));
                        }
                    }
                    accumulate(adj, *b, &db, self);
                }
            }
        }
        Ok(Gradients { adj })
    }
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

fn accumulate(adj: &mut [Option<Tensor>], id: ValueId, grad: &Tensor, tape: &Tape) {
    match &mut adj[id.0] {
        Some(existing) => {
            debug_assert_eq!(existing.shape(), grad.shape());
            for (e, g) in existing.data_mut().iter_mut().zip(grad.iter()) {
                *e += g;
            }
        }
        slot @ None => {
            debug_assert_eq!(tape.value(id).shape(), grad.shape());
            *slot = Some(grad.clone());
        }
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    debug_assert_eq!(a.shape(), b.shape());
    let data = a.iter().zip(b.iter()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("zip_map shape")
}

/// Plain m x k by k x n multiply, i-k-j order for cache locality.
pub(crate) fn matmul_raw(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    debug_assert_eq!(k, b.rows());
    let mut out = Tensor::zeros(&[m, n]);
    for i in 0..m {
        let arow = a.row_slice(i);
        for kk in 0..k {
            let aik = arow[kk];
            if aik == 0.0 {
                continue;
            }
            let brow = b.row_slice(kk);
            let orow = &mut out.data_mut()[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += aik * brow[j];
            }
        }
    }
    out
}

pub(crate) fn transpose_raw(a: &Tensor) -> Tensor {
    let (rows, cols) = (a.rows(), a.cols());
    let mut out = Tensor::zeros(&[cols, rows]);
    for r in 0..rows {
        for c in 0..cols {
            out.set(c, r, a.at(r, c));
        }
    }
    out
}

// ────────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_values() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let b = tape.leaf(Tensor::new(vec![2, 2], vec![5.0, 6.0, 7.0, 8.0]).unwrap());
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).data(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn matmul_shape_mismatch_is_reported() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(&[2, 3]));
        let b = tape.leaf(Tensor::zeros(&[2, 3]));
        let err = tape.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("matmul"), "{msg}");
        assert!(msg.contains("[2, 3]"), "{msg}");
    }

    #[test]
    fn softmax_rows_sum_to_one_and_handle_large_inputs() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::new(vec![2, 3], vec![1e3, 1e3 + 1.0, 1e3 - 1.0, -5.0, 0.0, 5.0]).unwrap());
        let s = tape.softmax_rows(a).unwrap();
        let v = tape.value(s);
        for r in 0..2 {
            let sum: f64 = v.row_slice(r).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(v.row_slice(r).iter().all(|p| p.is_finite() && *p > 0.0));
        }
    }

    #[test]
    fn softmax_two_equal_scores() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::row(&[0.7, 0.7]));
        let s = tape.softmax_rows(a).unwrap();
        assert!((tape.value(s).at(0, 0) - 0.5).abs() < 1e-15);
        assert!((tape.value(s).at(0, 1) - 0.5).abs() < 1e-15);
    }

    // Frozen gradient of f(x) = softmax(x)[0] at x = [0, 0]:
    // ds0/dx0 = s0(1-s0) = 0.25, ds0/dx1 = -s0 s1 = -0.25.
    #[test]
    fn softmax_first_component_gradient_at_origin() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::row(&[0.0, 0.0]));
        let s = tape.softmax_rows(x).unwrap();
        let first = tape.slice_cols(s, 0, 1).unwrap();
        let out = tape.sum_all(first).unwrap();
        let grads = tape.backward(out).unwrap();
        let g = grads.wrt(x, &tape);
        assert!((g.at(0, 0) - 0.25).abs() < 1e-12, "got {}", g.at(0, 0));
        assert!((g.at(0, 1) + 0.25).abs() < 1e-12, "got {}", g.at(0, 1));
    }

    // d/dA sum(A B) = 1 B^T, d/dB = A^T 1.
    #[test]
    fn matmul_sum_gradients() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::new(vec![2, 3], vec![0.5, -1.0, 2.0, 1.5, 0.0, -0.5]).unwrap());
        let b = tape.leaf(Tensor::new(vec![3, 2], vec![1.0, 2.0, -1.0, 0.5, 3.0, -2.0]).unwrap());
        let c = tape.matmul(a, b).unwrap();
        let out = tape.sum_all(c).unwrap();
        let grads = tape.backward(out).unwrap();
        let ga = grads.wrt(a, &tape);
        let gb = grads.wrt(b, &tape);
        // row sums of B^T = column sums of B broadcast: dA[i][k] = sum_j B[k][j]
        for i in 0..2 {
            assert!((ga.at(i, 0) - 3.0).abs() < 1e-12);
            assert!((ga.at(i, 1) + 0.5).abs() < 1e-12);
            assert!((ga.at(i, 2) - 1.0).abs() < 1e-12);
        }
        // dB[k][j] = sum_i A[i][k]
        for j in 0..2 {
            assert!((gb.at(0, j) - 2.0).abs() < 1e-12);
            assert!((gb.at(1, j) + 1.0).abs() < 1e-12);
            assert!((gb.at(2, j) - 1.5).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_requires_scalar_output() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(&[2, 2]));
        assert!(tape.backward(a).is_err());
    }

    // Adjoint accumulation is linear: the gradient of f + g is the sum
    // of the separate gradients.
    #[test]
    fn adjoint_accumulation_is_linear() {
        let x0 = Tensor::row(&[0.3, -0.7, 1.1]);

        let grad_of = |build: &dyn Fn(&mut Tape, ValueId) -> ValueId| -> Tensor {
            let mut tape = Tape::new();
            let x = tape.leaf(x0.clone());
            let out = build(&mut tape, x);
            tape.backward(out).unwrap().wrt(x, &tape)
        };

        let f = |tape: &mut Tape, x: ValueId| {
            let s = tape.sigmoid(x).unwrap();
            tape.sum_all(s).unwrap()
        };
        let g = |tape: &mut Tape, x: ValueId| {
            let t = tape.tanh(x).unwrap();
            let sq = tape.mul(t, t).unwrap();
            tape.sum_all(sq).unwrap()
        };
        let fg = |tape: &mut Tape, x: ValueId| {
            let a = f(tape, x);
            let b = g(tape, x);
            tape.add(a, b).unwrap()
        };

        let gf = grad_of(&f);
        let gg = grad_of(&g);
        let gfg = grad_of(&fg);
        for i in 0..3 {
            let want = gf.data()[i] + gg.data()[i];
            assert!((gfg.data()[i] - want).abs() < 1e-14);
        }
    }

    #[test]
    fn slice_and_stack_round_trip_gradients() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_fn(3, 2, |r, c| (r * 2 + c) as f64 * 0.1));
        let r0 = tape.slice_rows(x, 0, 1).unwrap();
        let r1 = tape.slice_rows(x, 1, 2).unwrap();
        let r2 = tape.slice_rows(x, 2, 3).unwrap();
        let stacked = tape.stack_rows(&[r0, r1, r2]).unwrap();
        assert_eq!(tape.value(stacked).data(), tape.value(x).data());
        let out = tape.sum_all(stacked).unwrap();
        let g = tape.backward(out).unwrap().wrt(x, &tape);
        assert!(g.iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn mean_all_gradient_divides_by_count() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::row(&[2.0, 4.0, 6.0, 8.0]));
        let m = tape.mean_all(x).unwrap();
        assert_eq!(tape.value(m).item().unwrap(), 5.0);
        let g = tape.backward(m).unwrap().wrt(x, &tape);
        assert!(g.iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn add_row_broadcast_values_and_gradients() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::from_fn(3, 2, |r, c| (r + c) as f64));
        let b = tape.leaf(Tensor::row(&[10.0, 20.0]));
        let y = tape.add_row_broadcast(a, b).unwrap();
        assert_eq!(tape.value(y).at(2, 1), 3.0 + 20.0);
        let out = tape.sum_all(y).unwrap();
        let grads = tape.backward(out).unwrap();
        let gb = grads.wrt(b, &tape);
        // bias gradient is the column sum of ones: 3 rows
        assert_eq!(gb.data(), &[3.0, 3.0]);
    }

    #[test]
    fn unused_leaf_gets_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::row(&[1.0]));
        let y = tape.leaf(Tensor::row(&[2.0]));
        let out = tape.sum_all(x).unwrap();
        let grads = tape.backward(out).unwrap();
        assert_eq!(grads.wrt(y, &tape).data(), &[0.0]);
    }
}
