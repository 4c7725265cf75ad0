//! Tensor-level Wengert tape.
//!
//! Every primitive pushes one node holding its forward value and the
//! handles of its inputs. [`Tape::backward`] walks the nodes in reverse
//! insertion order, which is a reverse topological order because a node can
//! only reference nodes created before it.

use std::ops::Range;
use std::sync::Arc;

use crate::diff::sparse::CsrMatrix;
use crate::diff::tensor::{gemm, gemm_acc, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How the right operand of a binary elementwise op lines up with the left.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    Same,
    /// 1 x C row vector repeated down the rows.
    Row,
    /// R x 1 column vector repeated across the columns.
    Col,
    Scalar,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    SparseMatMul(Arc<CsrMatrix>, Var),
    Transpose(Var),
    Binary(Binary, Var, Var, Broadcast),
    Scale(Var, f64),
    ScaleRows(Var, Arc<Vec<f64>>),
    Prelu(Var, Var),
    ColumnMean(Var),
    ColumnStd { x: Var, floor: f64 },
    FrobeniusSq(Var),
    Exp(Var),
    Log(Var),
    ReduceSum(Var),
    RowSlice(Var, usize),
    PairDot(Var, Var, Arc<Vec<(usize, usize)>>),
    SegmentLogSumExp(Var, Arc<Vec<Range<usize>>>),
    ClampMin(Var, f64),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records a computation for reverse-mode differentiation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every trainable leaf that it
/// depends on.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// The gradient of `v`, or zeros of `v`'s shape if the loss does not
    /// depend on it.
    pub fn get_or_zeros(&self, tape: &Tape, v: Var) -> Tensor {
        match self.get(v) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = tape.value(v).shape();
                Tensor::zeros(r, c)
            }
        }
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

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Leaf, true)
    }

    /// A leaf that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push_raw(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &str, value: Tensor, op: Op, requires_grad: bool) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite(name.to_string()));
        }
        Ok(self.push_raw(value, op, requires_grad))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(Error::shape("matmul", format!("{sa:?} x {sb:?}")));
        }
        let value = gemm(self.value(a), false, self.value(b), false);
        let rg = self.needs(a) || self.needs(b);
        self.push("matmul", value, Op::MatMul(a, b), rg)
    }

    /// `s * b` for a constant sparse operator `s`.
    pub fn sparse_matmul(&mut self, s: &Arc<CsrMatrix>, b: Var) -> Result<Var> {
        let value = s.matmul_dense(self.value(b))?;
        let rg = self.needs(b);
        self.push("sparse_matmul", value, Op::SparseMatMul(Arc::clone(s), b), rg)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).transpose();
        let rg = self.needs(a);
        self.push("transpose", value, Op::Transpose(a), rg)
    }

    fn broadcast_kind(&self, op: &'static str, a: Var, b: Var) -> Result<Broadcast> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa == sb {
            Ok(Broadcast::Same)
        } else if sb == (1, 1) {
            Ok(Broadcast::Scalar)
        } else if sb == (1, sa.1) {
            Ok(Broadcast::Row)
        } else if sb == (sa.0, 1) {
            Ok(Broadcast::Col)
        } else {
            Err(Error::shape(op, format!("{sa:?} with {sb:?}")))
        }
    }

    fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var> {
        let name = match kind {
            Binary::Add => "add",
            Binary::Sub => "sub",
            Binary::Mul => "mul",
            Binary::Div => "div",
        };
        let bc = self.broadcast_kind(name, a, b)?;
        let av = self.value(a);
        let bv = self.value(b);
        let cols = av.cols();
        let f = |x: f64, y: f64| match kind {
            Binary::Add => x + y,
            Binary::Sub => x - y,
            Binary::Mul => x * y,
            Binary::Div => x / y,
        };
        let data: Vec<f64> = av
            .as_slice()
            .iter()
            .enumerate()
            .map(|(idx, &x)| f(x, bv.as_slice()[broadcast_index(bc, idx, cols)]))
            .collect();
        let value = Tensor::from_vec(av.rows(), cols, data)?;
        let rg = self.needs(a) || self.needs(b);
        self.push(name, value, Op::Binary(kind, a, b, bc), rg)
    }

    /// Elementwise sum; `b` may be a matching matrix, a row vector, a
    /// column vector or a 1x1 scalar.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Div, a, b)
    }

    /// Multiplication by a constant.
    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let value = self.value(a).map(|x| x * factor);
        let rg = self.needs(a);
        self.push("scale", value, Op::Scale(a, factor), rg)
    }

    /// `diag(d) * a` for a constant vector `d`.
    pub fn scale_rows(&mut self, a: Var, diag: Arc<Vec<f64>>) -> Result<Var> {
        let av = self.value(a);
        if diag.len() != av.rows() {
            return Err(Error::shape(
                "scale_rows",
                format!("{} factors for {} rows", diag.len(), av.rows()),
            ));
        }
        let mut value = av.clone();
        for (r, &d) in diag.iter().enumerate() {
            value.row_mut(r).iter_mut().for_each(|x| *x *= d);
        }
        let rg = self.needs(a);
        self.push("scale_rows", value, Op::ScaleRows(a, diag), rg)
    }

    /// Parametric ReLU: `x` where positive, `slope * x` elsewhere.
    pub fn prelu(&mut self, x: Var, slope: Var) -> Result<Var> {
        if self.shape(slope) != (1, 1) {
            return Err(Error::shape(
                "prelu",
                format!("slope must be 1x1, got {:?}", self.shape(slope)),
            ));
        }
        let s = self.value(slope).item();
        let value = self.value(x).map(|v| if v > 0.0 { v } else { s * v });
        let rg = self.needs(x) || self.needs(slope);
        self.push("prelu", value, Op::Prelu(x, slope), rg)
    }

    /// Per-column mean as a 1 x C row vector.
    pub fn column_mean(&mut self, a: Var) -> Result<Var> {
        let value = column_means(self.value(a));
        let rg = self.needs(a);
        self.push("column_mean", value, Op::ColumnMean(a), rg)
    }

    /// Per-column population standard deviation, clamped below at `floor`.
    pub fn column_std(&mut self, a: Var, floor: f64) -> Result<Var> {
        let av = self.value(a);
        let n = av.rows();
        if n == 0 {
            return Err(Error::shape("column_std", "no rows"));
        }
        let mean = column_means(av);
        let mut var = vec![0.0; av.cols()];
        for r in 0..n {
            for (c, &x) in av.row(r).iter().enumerate() {
                let d = x - mean.as_slice()[c];
                var[c] += d * d;
            }
        }
        let data = var.into_iter().map(|v| (v / n as f64).sqrt().max(floor)).collect();
        let value = Tensor::from_vec(1, av.cols(), data)?;
        let rg = self.needs(a);
        self.push("column_std", value, Op::ColumnStd { x: a, floor }, rg)
    }

    /// Squared Frobenius norm as a 1x1 tensor.
    pub fn frobenius_sq(&mut self, a: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(a).frobenius_sq());
        let rg = self.needs(a);
        self.push("frobenius_sq", value, Op::FrobeniusSq(a), rg)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(f64::exp);
        let rg = self.needs(a);
        self.push("exp", value, Op::Exp(a), rg)
    }

    /// Natural log; any non-positive input is reported as an error.
    pub fn log(&mut self, a: Var) -> Result<Var> {
        if self.value(a).as_slice().iter().any(|&x| x <= 0.0) {
            return Err(Error::NonFinite("log of a non-positive value".into()));
        }
        let value = self.value(a).map(f64::ln);
        let rg = self.needs(a);
        self.push("log", value, Op::Log(a), rg)
    }

    pub fn reduce_sum(&mut self, a: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(a).sum());
        let rg = self.needs(a);
        self.push("reduce_sum", value, Op::ReduceSum(a), rg)
    }

    /// Rows `range` of `a`.
    pub fn row_slice(&mut self, a: Var, range: Range<usize>) -> Result<Var> {
        let av = self.value(a);
        if range.start > range.end || range.end > av.rows() {
            return Err(Error::shape("row_slice", format!("{range:?} of {} rows", av.rows())));
        }
        let cols = av.cols();
        let data = av.as_slice()[range.start * cols..range.end * cols].to_vec();
        let value = Tensor::from_vec(range.len(), cols, data)?;
        let rg = self.needs(a);
        self.push("row_slice", value, Op::RowSlice(a, range.start), rg)
    }

    /// Column vector of row dot products `left[i] · right[j]` for each
    /// `(i, j)` in `pairs`.
    pub fn pair_dot(&mut self, left: Var, right: Var, pairs: Arc<Vec<(usize, usize)>>) -> Result<Var> {
        let (lv, rv) = (self.value(left), self.value(right));
        if lv.cols() != rv.cols() {
            return Err(Error::shape(
                "pair_dot",
                format!("{:?} with {:?}", lv.shape(), rv.shape()),
            ));
        }
        let mut out = Vec::with_capacity(pairs.len());
        for &(i, j) in pairs.iter() {
            if i >= lv.rows() || j >= rv.rows() {
                return Err(Error::shape("pair_dot", format!("pair ({i}, {j}) out of range")));
            }
            out.push(lv.row(i).iter().zip(rv.row(j)).map(|(a, b)| a * b).sum());
        }
        let rg = self.needs(left) || self.needs(right);
        self.push("pair_dot", Tensor::column(out), Op::PairDot(left, right, pairs), rg)
    }

    /// `log Σ exp(x)` over each segment of a column vector, computed with a
    /// max shift. Segments must be nonempty.
    pub fn segment_logsumexp(&mut self, x: Var, segments: Arc<Vec<Range<usize>>>) -> Result<Var> {
        let xv = self.value(x);
        if xv.cols() != 1 {
            return Err(Error::shape("segment_logsumexp", "input must be a column vector"));
        }
        let xs = xv.as_slice();
        let mut out = Vec::with_capacity(segments.len());
        for seg in segments.iter() {
            if seg.is_empty() || seg.end > xs.len() {
                return Err(Error::InvalidArgument(format!(
                    "segment {seg:?} is empty or exceeds {} entries",
                    xs.len()
                )));
            }
            out.push(logsumexp(&xs[seg.clone()]));
        }
        let rg = self.needs(x);
        self.push(
            "segment_logsumexp",
            Tensor::column(out),
            Op::SegmentLogSumExp(x, segments),
            rg,
        )
    }

    /// `max(x, floor)`; entries below the floor pass no gradient.
    pub fn clamp_min(&mut self, x: Var, floor: f64) -> Result<Var> {
        let value = self.value(x).map(|v| v.max(floor));
        let rg = self.needs(x);
        self.push("clamp_min", value, Op::ClampMin(x, floor), rg)
    }

    /// Reverse pass from a 1x1 output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if self.shape(output) != (1, 1) {
            return Err(Error::shape(
                "backward",
                format!("output must be 1x1, got {:?}", self.shape(output)),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Tensor::scalar(1.0));
        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                grads[idx] = None;
                continue;
            }
            let g = match node.op {
                Op::Leaf => continue,
                _ => match grads[idx].take() {
                    Some(g) => g,
                    None => continue,
                },
            };
            self.backward_node(node, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn backward_node(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.needs(*a) {
                    let acc = slot(grads, *a, self.shape(*a));
                    gemm_acc(g, false, self.value(*b), true, acc);
                }
                if self.needs(*b) {
                    let acc = slot(grads, *b, self.shape(*b));
                    gemm_acc(self.value(*a), true, g, false, acc);
                }
            }
            Op::SparseMatMul(s, b) => {
                let acc = slot(grads, *b, self.shape(*b));
                s.transpose_matmul_acc(g, acc);
            }
            Op::Transpose(a) => {
                let acc = slot(grads, *a, self.shape(*a));
                acc.axpy(1.0, &g.transpose());
            }
            Op::Binary(kind, a, b, bc) => self.backward_binary(*kind, *a, *b, *bc, g, grads),
            Op::Scale(a, f) => {
                slot(grads, *a, self.shape(*a)).axpy(*f, g);
            }
            Op::ScaleRows(a, diag) => {
                let acc = slot(grads, *a, self.shape(*a));
                for (r, &d) in diag.iter().enumerate() {
                    for (o, &x) in acc.row_mut(r).iter_mut().zip(g.row(r)) {
                        *o += d * x;
                    }
                }
            }
            Op::Prelu(x, slope) => {
                let xv = self.value(*x);
                let s = self.value(*slope).item();
                if self.needs(*x) {
                    let acc = slot(grads, *x, xv.shape());
                    for ((o, &gi), &xi) in acc.as_mut_slice().iter_mut().zip(g.as_slice()).zip(xv.as_slice()) {
                        *o += if xi > 0.0 { gi } else { s * gi };
                    }
                }
                if self.needs(*slope) {
                    let ds: f64 = g
                        .as_slice()
                        .iter()
                        .zip(xv.as_slice())
                        .filter(|(_, &xi)| xi <= 0.0)
                        .map(|(gi, xi)| gi * xi)
                        .sum();
                    slot(grads, *slope, (1, 1)).as_mut_slice()[0] += ds;
                }
            }
            Op::ColumnMean(a) => {
                let (n, c) = self.shape(*a);
                let acc = slot(grads, *a, (n, c));
                let inv = 1.0 / n as f64;
                for r in 0..n {
                    for (o, &gi) in acc.row_mut(r).iter_mut().zip(g.as_slice()) {
                        *o += gi * inv;
                    }
                }
            }
            Op::ColumnStd { x, floor } => {
                let xv = self.value(*x);
                let (n, c) = xv.shape();
                let mean = column_means(xv);
                let std = &node.value;
                let acc = slot(grads, *x, (n, c));
                for r in 0..n {
                    for col in 0..c {
                        let sd = std.as_slice()[col];
                        // Clamped columns are constant in x.
                        if sd <= *floor {
                            continue;
                        }
                        let d = xv.get(r, col) - mean.as_slice()[col];
                        acc.as_mut_slice()[r * c + col] += g.as_slice()[col] * d / (n as f64 * sd);
                    }
                }
            }
            Op::FrobeniusSq(a) => {
                let gs = g.item();
                slot(grads, *a, self.shape(*a)).axpy(2.0 * gs, self.value(*a));
            }
            Op::Exp(a) => {
                let acc = slot(grads, *a, self.shape(*a));
                for ((o, &gi), &y) in acc
                    .as_mut_slice()
                    .iter_mut()
                    .zip(g.as_slice())
                    .zip(node.value.as_slice())
                {
                    *o += gi * y;
                }
            }
            Op::Log(a) => {
                let av = self.value(*a);
                let acc = slot(grads, *a, av.shape());
                for ((o, &gi), &x) in acc.as_mut_slice().iter_mut().zip(g.as_slice()).zip(av.as_slice()) {
                    *o += gi / x;
                }
            }
            Op::ReduceSum(a) => {
                let gs = g.item();
                slot(grads, *a, self.shape(*a))
                    .as_mut_slice()
                    .iter_mut()
                    .for_each(|o| *o += gs);
            }
            Op::RowSlice(a, start) => {
                let shape = self.shape(*a);
                let acc = slot(grads, *a, shape);
                let off = start * shape.1;
                for (o, &gi) in acc.as_mut_slice()[off..off + g.len()].iter_mut().zip(g.as_slice()) {
                    *o += gi;
                }
            }
            Op::PairDot(left, right, pairs) => {
                let (lv, rv) = (self.value(*left), self.value(*right));
                if self.needs(*left) {
                    let acc = slot(grads, *left, lv.shape());
                    for (p, &(i, j)) in pairs.iter().enumerate() {
                        let gp = g.as_slice()[p];
                        for (o, &y) in acc.row_mut(i).iter_mut().zip(rv.row(j)) {
                            *o += gp * y;
                        }
                    }
                }
                if self.needs(*right) {
                    let acc = slot(grads, *right, rv.shape());
                    for (p, &(i, j)) in pairs.iter().enumerate() {
                        let gp = g.as_slice()[p];
                        for (o, &x) in acc.row_mut(j).iter_mut().zip(lv.row(i)) {
                            *o += gp * x;
                        }
                    }
                }
            }
            Op::SegmentLogSumExp(x, segments) => {
                let xv = self.value(*x);
                let acc = slot(grads, *x, xv.shape());
                for (s, seg) in segments.iter().enumerate() {
                    let lse = node.value.as_slice()[s];
                    let gs = g.as_slice()[s];
                    for t in seg.clone() {
                        acc.as_mut_slice()[t] += gs * (xv.as_slice()[t] - lse).exp();
                    }
                }
            }
            Op::ClampMin(x, floor) => {
                let xv = self.value(*x);
                let acc = slot(grads, *x, xv.shape());
                for ((o, &gi), &xi) in acc.as_mut_slice().iter_mut().zip(g.as_slice()).zip(xv.as_slice()) {
                    if xi >= *floor {
                        *o += gi;
                    }
                }
            }
        }
    }

    fn backward_binary(&self, kind: Binary, a: Var, b: Var, bc: Broadcast, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let av = self.value(a);
        let bv = self.value(b);
        let cols = av.cols();
        if self.needs(a) {
            let acc = slot(grads, a, av.shape());
            for (idx, o) in acc.as_mut_slice().iter_mut().enumerate() {
                let gi = g.as_slice()[idx];
                let y = bv.as_slice()[broadcast_index(bc, idx, cols)];
                *o += match kind {
                    Binary::Add | Binary::Sub => gi,
                    Binary::Mul => gi * y,
                    Binary::Div => gi / y,
                };
            }
        }
        if self.needs(b) {
            let acc = slot(grads, b, bv.shape());
            for (idx, &gi) in g.as_slice().iter().enumerate() {
                let bi = broadcast_index(bc, idx, cols);
                let x = av.as_slice()[idx];
                let y = bv.as_slice()[bi];
                acc.as_mut_slice()[bi] += match kind {
                    Binary::Add => gi,
                    Binary::Sub => -gi,
                    Binary::Mul => gi * x,
                    Binary::Div => -gi * x / (y * y),
                };
            }
        }
    }
}

#[inline]
fn broadcast_index(bc: Broadcast, idx: usize, cols: usize) -> usize {
    match bc {
        Broadcast::Same => idx,
        Broadcast::Row => idx % cols,
        Broadcast::Col => idx / cols,
        Broadcast::Scalar => 0,
    }
}

fn slot(grads: &mut [Option<Tensor>], v: Var, shape: (usize, usize)) -> &mut Tensor {
    grads[v.0].get_or_insert_with(|| Tensor::zeros(shape.0, shape.1))
}

fn column_means(a: &Tensor) -> Tensor {
    let (n, c) = a.shape();
    let mut out = vec![0.0; c];
    for r in 0..n {
        for (o, &x) in out.iter_mut().zip(a.row(r)) {
            *o += x;
        }
    }
    let inv = if n == 0 { 0.0 } else { 1.0 / n as f64 };
    out.iter_mut().for_each(|o| *o *= inv);
    Tensor::from_vec(1, c, out).expect("row vector shape")
}

/// Max-shifted `log Σ exp(x)`.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
