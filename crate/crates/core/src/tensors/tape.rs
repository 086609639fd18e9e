//! Define-by-run reverse-mode tape.
//!
//! Every forward call appends one node holding its output value and what the
//! backward pass needs. Nodes are stored in creation order, which is already a
//! topological order, so [`Tape::backward`] is a single reverse sweep.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::Tensor;

/// Row sums below this are treated as empty rows by [`Tape::row_normalize_sum1`].
pub const DEGENERATE_ROW_SUM: f64 = 1e-8;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation that produced a node, with whatever backward needs cached.
#[derive(Debug, Clone)]
pub enum Op<S> {
    Leaf,
    MatMul(Var, Var),
    AddBroadcastRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    ScalarMul(Var, Var),
    Affine {
        x: Var,
        scale: S,
    },
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Clamp {
        x: Var,
        lo: S,
        hi: S,
    },
    ConcatCols(Var, Var),
    RowNormalizeSum1 {
        x: Var,
        uniform: Vec<bool>,
    },
    PairwiseSqDist(Var, Var),
    Mean(Var),
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<S>,
    },
    BinaryCrossEntropy {
        pred: Var,
        target: Vec<S>,
        mask: Vec<S>,
        count: S,
    },
    GatherRows {
        x: Var,
        rows: Vec<usize>,
    },
}

impl<S> Op<S> {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::AddBroadcastRow(..) => "add_broadcast_row",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::ScalarMul(..) => "scalar_mul",
            Op::Affine { .. } => "affine",
            Op::Relu(_) => "relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Clamp { .. } => "clamp",
            Op::ConcatCols(..) => "concat_cols",
            Op::RowNormalizeSum1 { .. } => "row_normalize_sum1",
            Op::PairwiseSqDist(..) => "pairwise_sqdist",
            Op::Mean(_) => "mean",
            Op::SoftmaxCrossEntropy { .. } => "softmax_cross_entropy",
            Op::BinaryCrossEntropy { .. } => "binary_cross_entropy",
            Op::GatherRows { .. } => "gather_rows",
        }
    }

    fn inputs(&self) -> [Option<Var>; 2] {
        match *self {
            Op::Leaf => [None, None],
            Op::MatMul(a, b)
            | Op::AddBroadcastRow(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::ScalarMul(a, b)
            | Op::ConcatCols(a, b)
            | Op::PairwiseSqDist(a, b) => [Some(a), Some(b)],
            Op::Affine { x, .. }
            | Op::Relu(x)
            | Op::Sigmoid(x)
            | Op::Exp(x)
            | Op::Log(x)
            | Op::Clamp { x, .. }
            | Op::RowNormalizeSum1 { x, .. }
            | Op::Mean(x)
            | Op::GatherRows { x, .. } => [Some(x), None],
            Op::SoftmaxCrossEntropy { logits, .. } => [Some(logits), None],
            Op::BinaryCrossEntropy { pred, .. } => [Some(pred), None],
        }
    }
}

#[derive(Debug, Clone)]
pub struct TapeNode<S> {
    pub op: Op<S>,
    pub value: Tensor<S>,
    pub requires_grad: bool,
    needs_grad: bool,
    grad: Option<Tensor<S>>,
}

#[derive(Debug, Clone, Default)]
pub struct Tape<S> {
    nodes: Vec<TapeNode<S>>,
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    /// Drops every node created after the first `len`.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    pub fn node(&self, v: Var) -> &TapeNode<S> {
        &self.nodes[v.0]
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of the last [`backward`](Self::backward) loss with respect
    /// to a leaf created by [`param`](Self::param).
    pub fn grad(&self, v: Var) -> Option<&Tensor<S>> {
        self.nodes[v.0].grad.as_ref()
    }

    /// Constant input. Gradients never flow into it.
    pub fn constant(&mut self, value: Tensor<S>) -> Var {
        self.push_leaf(value, false)
    }

    /// Trainable input.
    pub fn param(&mut self, value: Tensor<S>) -> Var {
        self.push_leaf(value, true)
    }

    fn push_leaf(&mut self, value: Tensor<S>, requires_grad: bool) -> Var {
        self.nodes.push(TapeNode {
            op: Op::Leaf,
            value,
            requires_grad,
            needs_grad: requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op<S>, value: Tensor<S>) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: op.name() });
        }
        let needs_grad = op
            .inputs()
            .iter()
            .flatten()
            .any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(TapeNode {
            op,
            value,
            requires_grad: false,
            needs_grad,
            grad: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<[usize; 2]> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::ShapeMismatch {
                op,
                lhs: sa,
                rhs: sb,
            });
        }
        Ok(sa)
    }

    fn unary(&mut self, x: Var, op: Op<S>, f: impl Fn(S) -> S) -> Result<Var> {
        let out = self.value(x).map(f);
        self.push(op, out)
    }

    fn binary(&mut self, op: Op<S>, a: Var, b: Var, f: impl Fn(S, S) -> S) -> Result<Var> {
        let [r, c] = self.same_shape(op.name(), a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        self.push(op, Tensor::new(r, c, data)?)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa[1] != sb[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: sa,
                rhs: sb,
            });
        }
        let out = matmul_raw(self.value(a), self.value(b));
        self.push(Op::MatMul(a, b), out)
    }

    /// `Σ_k w[i][k] · values[k]` for every row `i` of `weights`.
    pub fn matrix_row_weighted_sum(&mut self, weights: Var, values: Var) -> Result<Var> {
        self.matmul(weights, values)
    }

    /// Adds a `1 × m` row to every row of an `n × m` matrix.
    pub fn add_broadcast_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (sx, sr) = (self.shape(x), self.shape(row));
        if sr[0] != 1 || sr[1] != sx[1] {
            return Err(Error::ShapeMismatch {
                op: "add_broadcast_row",
                lhs: sx,
                rhs: sr,
            });
        }
        let b = self.value(row).data().to_vec();
        let mut out = self.value(x).clone();
        for r in 0..sx[0] {
            for (o, &bv) in out.data_mut()[r * sx[1]..(r + 1) * sx[1]]
                .iter_mut()
                .zip(&b)
            {
                *o += bv;
            }
        }
        self.push(Op::AddBroadcastRow(x, row), out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Op::Add(a, b), a, b, |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Op::Sub(a, b), a, b, |x, y| x - y)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Op::Mul(a, b), a, b, |x, y| x * y)
    }

    /// Multiplies every entry of `x` by the `1 × 1` tensor `s`.
    pub fn scalar_mul(&mut self, x: Var, s: Var) -> Result<Var> {
        let ss = self.shape(s);
        if ss != [1, 1] {
            return Err(Error::ShapeMismatch {
                op: "scalar_mul",
                lhs: self.shape(x),
                rhs: ss,
            });
        }
        let k = self.value(s).item();
        self.unary(x, Op::ScalarMul(x, s), |v| v * k)
    }

    /// `scale · x + shift` with constant coefficients.
    pub fn affine(&mut self, x: Var, scale: S, shift: S) -> Result<Var> {
        self.unary(x, Op::Affine { x, scale }, |v| scale * v + shift)
    }

    pub fn scale(&mut self, x: Var, c: S) -> Result<Var> {
        self.affine(x, c, S::zero())
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary(
            x,
            Op::Relu(x),
            |v| if v > S::zero() { v } else { S::zero() },
        )
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Sigmoid(x), sigmoid)
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Exp(x), S::exp)
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        if let Some(bad) = self.value(x).data().iter().find(|&&v| v <= S::zero()) {
            return Err(Error::domain("log", format!("nonpositive input {bad}")));
        }
        self.unary(x, Op::Log(x), S::ln)
    }

    pub fn clamp(&mut self, x: Var, lo: S, hi: S) -> Result<Var> {
        self.unary(x, Op::Clamp { x, lo, hi }, |v| v.max(lo).min(hi))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa[0] != sb[0] {
            return Err(Error::ShapeMismatch {
                op: "concat_cols",
                lhs: sa,
                rhs: sb,
            });
        }
        let cols = sa[1] + sb[1];
        let mut data = Vec::with_capacity(sa[0] * cols);
        for r in 0..sa[0] {
            data.extend_from_slice(self.value(a).row_slice(r));
            data.extend_from_slice(self.value(b).row_slice(r));
        }
        self.push(Op::ConcatCols(a, b), Tensor::new(sa[0], cols, data)?)
    }

    /// Scales each row to sum to one. Rows summing below
    /// [`DEGENERATE_ROW_SUM`] become uniform and pass no gradient.
    pub fn row_normalize_sum1(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let [rows, cols] = xv.shape();
        if let Some(bad) = xv.data().iter().find(|&&v| v < S::zero()) {
            return Err(Error::domain(
                "row_normalize_sum1",
                format!("negative entry {bad}"),
            ));
        }
        let threshold = S::of(DEGENERATE_ROW_SUM);
        let uniform_w = S::one() / S::of(cols as f64);
        let mut uniform = Vec::with_capacity(rows);
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let row = xv.row_slice(r);
            let sum: S = row.iter().copied().sum();
            let degenerate = sum < threshold;
            uniform.push(degenerate);
            for (c, &v) in row.iter().enumerate() {
                out.set(r, c, if degenerate { uniform_w } else { v / sum });
            }
        }
        self.push(Op::RowNormalizeSum1 { x, uniform }, out)
    }

    /// `D[i][j] = ‖a_i − b_j‖²`.
    pub fn pairwise_sqdist(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa[1] != sb[1] {
            return Err(Error::ShapeMismatch {
                op: "pairwise_sqdist",
                lhs: sa,
                rhs: sb,
            });
        }
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = Tensor::zeros(sa[0], sb[0]);
        for i in 0..sa[0] {
            let ai = av.row_slice(i);
            for j in 0..sb[0] {
                let d: S = ai
                    .iter()
                    .zip(bv.row_slice(j))
                    .map(|(&x, &y)| (x - y) * (x - y))
                    .sum();
                out.set(i, j, d);
            }
        }
        self.push(Op::PairwiseSqDist(a, b), out)
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.is_empty() {
            return Err(Error::domain("mean", "empty input"));
        }
        let m = xv.data().iter().copied().sum::<S>() / S::of(xv.len() as f64);
        self.push(Op::Mean(x), Tensor::scalar(m))
    }

    /// Per-row cross-entropy of softmax(logits) against integer labels,
    /// returned as an `n × 1` column.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        let [rows, cols] = lv.shape();
        if labels.len() != rows {
            return Err(Error::LengthMismatch {
                what: "softmax_cross_entropy labels",
                expected: rows,
                actual: labels.len(),
            });
        }
        let mut probs = Vec::with_capacity(rows * cols);
        let mut out = Vec::with_capacity(rows);
        for (r, &y) in labels.iter().enumerate() {
            if y >= cols {
                return Err(Error::domain(
                    "softmax_cross_entropy",
                    format!("label {y} outside {cols} classes"),
                ));
            }
            let row = lv.row_slice(r);
            let max = row.iter().copied().fold(S::neg_infinity(), S::max);
            let sum: S = row.iter().map(|&v| (v - max).exp()).sum();
            let log_z = max + sum.ln();
            probs.extend(row.iter().map(|&v| (v - log_z).exp()));
            out.push(log_z - row[y]);
        }
        let out = Tensor::new(rows, 1, out)?;
        self.push(
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            out,
        )
    }

    /// Mean binary cross-entropy `−(t·ln p + (1−t)·ln(1−p))` over the
    /// entries where `mask` is nonzero. `target` and `mask` are constants.
    pub fn binary_cross_entropy(
        &mut self,
        pred: Var,
        target: &Tensor<S>,
        mask: &Tensor<S>,
    ) -> Result<Var> {
        let sp = self.shape(pred);
        for other in [target.shape(), mask.shape()] {
            if other != sp {
                return Err(Error::ShapeMismatch {
                    op: "binary_cross_entropy",
                    lhs: sp,
                    rhs: other,
                });
            }
        }
        let count: S = mask.data().iter().copied().sum();
        if count <= S::zero() {
            return Err(Error::domain("binary_cross_entropy", "empty mask"));
        }
        let mut total = S::zero();
        for ((&p, &t), &m) in self
            .value(pred)
            .data()
            .iter()
            .zip(target.data())
            .zip(mask.data())
        {
            if m == S::zero() {
                continue;
            }
            if p <= S::zero() || p >= S::one() {
                return Err(Error::domain(
                    "binary_cross_entropy",
                    format!("prediction {p} outside (0, 1)"),
                ));
            }
            total -= m * (t * p.ln() + (S::one() - t) * (S::one() - p).ln());
        }
        self.push(
            Op::BinaryCrossEntropy {
                pred,
                target: target.data().to_vec(),
                mask: mask.data().to_vec(),
                count,
            },
            Tensor::scalar(total / count),
        )
    }

    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        let cols = xv.cols();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            if r >= xv.rows() {
                return Err(Error::domain(
                    "gather_rows",
                    format!("row {r} out of {}", xv.rows()),
                ));
            }
            data.extend_from_slice(xv.row_slice(r));
        }
        let out = Tensor::new(rows.len(), cols, data)?;
        self.push(
            Op::GatherRows {
                x,
                rows: rows.to_vec(),
            },
            out,
        )
    }

    /// Reverse sweep from a `1 × 1` loss. Leaf gradients are stored on the
    /// tape and read back with [`grad`](Self::grad).
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.shape(loss);
        if shape != [1, 1] {
            return Err(Error::NonScalarLoss(shape));
        }
        for n in &mut self.nodes {
            n.grad = None;
        }
        let mut grads: Vec<Option<Vec<S>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![S::one()]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                if node.requires_grad {
                    let [r, c] = node.value.shape();
                    self.nodes[i].grad = Some(Tensor::new(r, c, g)?);
                }
                continue;
            }
            for (input, contribution) in self.local_grads(i, &g) {
                if !self.nodes[input.0].needs_grad {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => acc
                        .iter_mut()
                        .zip(&contribution)
                        .for_each(|(a, &c)| *a += c),
                    slot @ None => *slot = Some(contribution),
                }
            }
        }
        Ok(())
    }

    /// Vector-Jacobian products of node `i` for upstream gradient `g`.
    fn local_grads(&self, i: usize, g: &[S]) -> Vec<(Var, Vec<S>)> {
        let node = &self.nodes[i];
        let y = node.value.data();
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => Vec::new(),
            Op::MatMul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let [n, k] = av.shape();
                let m = bv.cols();
                let mut ga = vec![S::zero(); n * k];
                let mut gb = vec![S::zero(); k * m];
                for r in 0..n {
                    for c in 0..m {
                        let gv = g[r * m + c];
                        if gv == S::zero() {
                            continue;
                        }
                        for t in 0..k {
                            ga[r * k + t] += gv * bv.get(t, c);
                            gb[t * m + c] += gv * av.get(r, t);
                        }
                    }
                }
                vec![(*a, ga), (*b, gb)]
            }
            Op::AddBroadcastRow(x, row) => {
                let cols = val(*row).cols();
                let mut gr = vec![S::zero(); cols];
                for chunk in g.chunks(cols) {
                    gr.iter_mut().zip(chunk).for_each(|(a, &c)| *a += c);
                }
                vec![(*x, g.to_vec()), (*row, gr)]
            }
            Op::Add(a, b) => vec![(*a, g.to_vec()), (*b, g.to_vec())],
            Op::Sub(a, b) => vec![(*a, g.to_vec()), (*b, g.iter().map(|&v| -v).collect())],
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a).data(), val(*b).data());
                vec![
                    (*a, g.iter().zip(bv).map(|(&gv, &w)| gv * w).collect()),
                    (*b, g.iter().zip(av).map(|(&gv, &w)| gv * w).collect()),
                ]
            }
            Op::ScalarMul(x, s) => {
                let k = val(*s).item();
                let xv = val(*x).data();
                let gs: S = g.iter().zip(xv).map(|(&gv, &w)| gv * w).sum();
                vec![(*x, g.iter().map(|&gv| gv * k).collect()), (*s, vec![gs])]
            }
            Op::Affine { x, scale } => vec![(*x, g.iter().map(|&gv| gv * *scale).collect())],
            Op::Relu(x) => {
                let xv = val(*x).data();
                let gx = g
                    .iter()
                    .zip(xv)
                    .map(|(&gv, &v)| if v > S::zero() { gv } else { S::zero() })
                    .collect();
                vec![(*x, gx)]
            }
            Op::Sigmoid(x) => {
                let gx = g
                    .iter()
                    .zip(y)
                    .map(|(&gv, &s)| gv * s * (S::one() - s))
                    .collect();
                vec![(*x, gx)]
            }
            Op::Exp(x) => vec![(*x, g.iter().zip(y).map(|(&gv, &e)| gv * e).collect())],
            Op::Log(x) => {
                let xv = val(*x).data();
                vec![(*x, g.iter().zip(xv).map(|(&gv, &v)| gv / v).collect())]
            }
            Op::Clamp { x, lo, hi } => {
                let xv = val(*x).data();
                let gx = g
                    .iter()
                    .zip(xv)
                    .map(|(&gv, &v)| if v > *lo && v < *hi { gv } else { S::zero() })
                    .collect();
                vec![(*x, gx)]
            }
            Op::ConcatCols(a, b) => {
                let (ca, cb) = (val(*a).cols(), val(*b).cols());
                let mut ga = Vec::with_capacity(g.len());
                let mut gb = Vec::with_capacity(g.len());
                for chunk in g.chunks(ca + cb) {
                    ga.extend_from_slice(&chunk[..ca]);
                    gb.extend_from_slice(&chunk[ca..]);
                }
                vec![(*a, ga), (*b, gb)]
            }
            Op::RowNormalizeSum1 { x, uniform } => {
                let xv = val(*x);
                let cols = xv.cols();
                let mut gx = vec![S::zero(); g.len()];
                for (r, &degenerate) in uniform.iter().enumerate() {
                    if degenerate {
                        continue;
                    }
                    let span = r * cols..(r + 1) * cols;
                    let sum: S = xv.row_slice(r).iter().copied().sum();
                    let dot: S = g[span.clone()]
                        .iter()
                        .zip(&y[span.clone()])
                        .map(|(&gv, &yv)| gv * yv)
                        .sum();
                    for k in span {
                        gx[k] = (g[k] - dot) / sum;
                    }
                }
                vec![(*x, gx)]
            }
            Op::PairwiseSqDist(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let (n, m, d) = (av.rows(), bv.rows(), av.cols());
                let mut ga = vec![S::zero(); n * d];
                let mut gb = vec![S::zero(); m * d];
                let two = S::of(2.0);
                for i in 0..n {
                    for j in 0..m {
                        let gv = g[i * m + j];
                        if gv == S::zero() {
                            continue;
                        }
                        for t in 0..d {
                            let diff = two * gv * (av.get(i, t) - bv.get(j, t));
                            ga[i * d + t] += diff;
                            gb[j * d + t] -= diff;
                        }
                    }
                }
                vec![(*a, ga), (*b, gb)]
            }
            Op::Mean(x) => {
                let n = val(*x).len();
                vec![(*x, vec![g[0] / S::of(n as f64); n])]
            }
            Op::SoftmaxCrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let cols = val(*logits).cols();
                let mut gx = vec![S::zero(); probs.len()];
                for (r, &label) in labels.iter().enumerate() {
                    for c in 0..cols {
                        let onehot = if c == label { S::one() } else { S::zero() };
                        gx[r * cols + c] = g[r] * (probs[r * cols + c] - onehot);
                    }
                }
                vec![(*logits, gx)]
            }
            Op::BinaryCrossEntropy {
                pred,
                target,
                mask,
                count,
            } => {
                let pv = val(*pred).data();
                let gx = pv
                    .iter()
                    .zip(target)
                    .zip(mask)
                    .map(|((&p, &t), &m)| {
                        if m == S::zero() {
                            S::zero()
                        } else {
                            g[0] * m * ((S::one() - t) / (S::one() - p) - t / p) / *count
                        }
                    })
                    .collect();
                vec![(*pred, gx)]
            }
            Op::GatherRows { x, rows } => {
                let xv = val(*x);
                let cols = xv.cols();
                let mut gx = vec![S::zero(); xv.len()];
                for (k, &r) in rows.iter().enumerate() {
                    for c in 0..cols {
                        gx[r * cols + c] += g[k * cols + c];
                    }
                }
                vec![(*x, gx)]
            }
        }
    }
}

#[inline]
pub(crate) fn sigmoid<S: Scalar>(v: S) -> S {
    if v >= S::zero() {
        S::one() / (S::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (S::one() + e)
    }
}

pub(crate) fn matmul_raw<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Tensor<S> {
    let [n, k] = a.shape();
    let m = b.cols();
    let mut out = Tensor::zeros(n, m);
    let (ad, bd) = (a.data(), b.data());
    let od = out.data_mut();
    for r in 0..n {
        for t in 0..k {
            let av = ad[r * k + t];
            if av == S::zero() {
                continue;
            }
            let brow = &bd[t * m..(t + 1) * m];
            for (o, &bv) in od[r * m..(r + 1) * m].iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}
