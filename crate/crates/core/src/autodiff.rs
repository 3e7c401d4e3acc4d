//! Define-by-run reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every operation as it executes. Nodes are appended in
//! evaluation order, so the tape is already topologically sorted and the
//! backward pass is a single reverse sweep that visits each node once.
//!
//! The two fire operations are step functions. Their forward pass is exact;
//! their backward pass substitutes the rectangular [`Surrogate`] derivative.

use crate::error::{Error, Result};
use crate::tensor::{gemm, CsrMatrix, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Rectangular-window surrogate derivative for a hard threshold.
///
/// The derivative is `1 / width` when the pre-activation lies strictly within
/// `width / 2` of the threshold and zero elsewhere.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Surrogate {
    pub width: f64,
}

impl Default for Surrogate {
    fn default() -> Self {
        Surrogate { width: 1.0 }
    }
}

impl Surrogate {
    pub fn rectangular(width: f64) -> Result<Self> {
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "surrogate width must be positive, got {width}"
            )));
        }
        Ok(Surrogate { width })
    }

    /// Derivative at signed distance `offset` from the threshold.
    #[inline]
    pub fn derivative(&self, offset: f64) -> f64 {
        if offset.abs() < self.width / 2.0 {
            1.0 / self.width
        } else {
            0.0
        }
    }
}

/// `1` where `x >= threshold`, else `0`.
#[inline]
pub fn heaviside(x: f64, threshold: f64) -> f64 {
    if x >= threshold {
        1.0
    } else {
        0.0
    }
}

/// `+1` where `x >= gamma`, `-1` where `x <= -gamma`, else `0`.
#[inline]
pub fn signed_heaviside(x: f64, gamma: f64) -> f64 {
    if x >= gamma {
        1.0
    } else if x <= -gamma {
        -1.0
    } else {
        0.0
    }
}

#[derive(Clone, Debug)]
enum Op<'a> {
    Leaf,
    MatMul(Var, Var),
    /// `a * b^T`
    MatMulNt(Var, Var),
    SpMM(&'a CsrMatrix, Var),
    Add(Var, Var),
    AddRowBroadcast(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    SoftmaxRows(Var),
    SelectRows(Var, Vec<usize>),
    CrossEntropy(Var, Vec<usize>),
    Sum(Var),
    PairDot(Var, Vec<(usize, usize)>),
    BceWithLogits(Var, Vec<f64>),
    Fire {
        x: Var,
        threshold: f64,
        surrogate: Surrogate,
    },
    SignedFire {
        x: Var,
        threshold: f64,
        surrogate: Surrogate,
    },
}

impl Op<'_> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::MatMulNt(..) => "matmul_nt",
            Op::SpMM(..) => "spmm",
            Op::Add(..) => "add",
            Op::AddRowBroadcast(..) => "add_row_broadcast",
            Op::Scale(..) => "scale",
            Op::Relu(..) => "relu",
            Op::SoftmaxRows(..) => "softmax_rows",
            Op::SelectRows(..) => "select_rows",
            Op::CrossEntropy(..) => "cross_entropy",
            Op::Sum(..) => "sum",
            Op::PairDot(..) => "pair_dot",
            Op::BceWithLogits(..) => "bce_with_logits",
            Op::Fire { .. } => "heaviside_ste",
            Op::SignedFire { .. } => "signed_heaviside_ste",
        }
    }
}

struct Node<'a> {
    value: Tensor,
    op: Op<'a>,
    requires_grad: bool,
}

/// Records a forward computation for one backward pass.
#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
    has_fire: bool,
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            has_fire: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// True once any fire op has been recorded.
    pub fn has_fire(&self) -> bool {
        self.has_fire
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, true)
    }

    /// Leaf that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, false)
    }

    fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: "leaf" });
        }
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn push(&mut self, value: Tensor, op: Op<'a>, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: op.name() });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        if matches!(op, Op::Fire { .. } | Op::SignedFire { .. }) {
            self.has_fire = true;
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn shape_err(&self, op: &'static str, a: Var, b: Var) -> Error {
        Error::ShapeMismatch {
            op,
            left: self.value(a).shape(),
            right: self.value(b).shape(),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        self.push(out, Op::MatMul(a, b), &[a, b])
    }

    /// `a * b^T` without materializing the transpose.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.cols() {
            return Err(self.shape_err("matmul_nt", a, b));
        }
        let mut out = Tensor::zeros(av.rows(), bv.rows());
        gemm(av, false, bv, true, &mut out, 0.0);
        self.push(out, Op::MatMulNt(a, b), &[a, b])
    }

    /// Constant sparse matrix times a tracked dense matrix.
    pub fn spmm(&mut self, m: &'a CsrMatrix, x: Var) -> Result<Var> {
        let out = m.mul_dense(self.value(x))?;
        self.push(out, Op::SpMM(m, x), &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).add(self.value(b))?;
        self.push(out, Op::Add(a, b), &[a, b])
    }

    /// Adds a `1 x c` row vector to every row of `a`.
    pub fn add_row_broadcast(&mut self, a: Var, row: Var) -> Result<Var> {
        let (av, rv) = (self.value(a), self.value(row));
        if rv.rows() != 1 || rv.cols() != av.cols() {
            return Err(self.shape_err("add_row_broadcast", a, row));
        }
        let mut out = av.clone();
        let c = av.cols();
        for chunk in out.data_mut().chunks_mut(c.max(1)) {
            for (o, r) in chunk.iter_mut().zip(rv.data()) {
                *o += r;
            }
        }
        self.push(out, Op::AddRowBroadcast(a, row), &[a, row])
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let out = self.value(a).scale(factor);
        self.push(out, Op::Scale(a, factor), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|v| v.max(0.0));
        self.push(out, Op::Relu(a), &[a])
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let out = softmax_rows(self.value(a));
        self.push(out, Op::SoftmaxRows(a), &[a])
    }

    pub fn select_rows(&mut self, a: Var, ids: &[usize]) -> Result<Var> {
        let av = self.value(a);
        if let Some(&bad) = ids.iter().find(|&&i| i >= av.rows()) {
            return Err(Error::ShapeMismatch {
                op: "select_rows",
                left: av.shape(),
                right: (bad, 0),
            });
        }
        let out = av.select_rows(ids);
        self.push(out, Op::SelectRows(a, ids.to_vec()), &[a])
    }

    /// Mean softmax cross-entropy of `logits` (rows) against integer targets.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        if targets.len() != lv.rows() || targets.iter().any(|&t| t >= lv.cols()) || lv.rows() == 0 {
            return Err(Error::ShapeMismatch {
                op: "cross_entropy",
                left: lv.shape(),
                right: (targets.len(), targets.iter().copied().max().unwrap_or(0)),
            });
        }
        let out = Tensor::scalar(cross_entropy(lv, targets));
        self.push(out, Op::CrossEntropy(logits, targets.to_vec()), &[logits])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a), &[a])
    }

    /// Row dot products `z[u] . z[v]` for each pair, as an `m x 1` column.
    pub fn pair_dot(&mut self, z: Var, pairs: &[(usize, usize)]) -> Result<Var> {
        let zv = self.value(z);
        if pairs.iter().any(|&(u, v)| u >= zv.rows() || v >= zv.rows()) {
            return Err(Error::ShapeMismatch {
                op: "pair_dot",
                left: zv.shape(),
                right: (pairs.len(), 2),
            });
        }
        let data = pairs
            .iter()
            .map(|&(u, v)| zv.row(u).iter().zip(zv.row(v)).map(|(a, b)| a * b).sum())
            .collect();
        let out = Tensor::from_vec(pairs.len(), 1, data)?;
        self.push(out, Op::PairDot(z, pairs.to_vec()), &[z])
    }

    /// Mean binary cross-entropy of a column of logits against 0/1 targets.
    pub fn bce_with_logits(&mut self, x: Var, targets: &[f64]) -> Result<Var> {
        let xv = self.value(x);
        if xv.cols() != 1 || xv.rows() != targets.len() || targets.is_empty() {
            return Err(Error::ShapeMismatch {
                op: "bce_with_logits",
                left: xv.shape(),
                right: (targets.len(), 1),
            });
        }
        let total: f64 = xv
            .data()
            .iter()
            .zip(targets)
            .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
            .sum();
        let out = Tensor::scalar(total / targets.len() as f64);
        self.push(out, Op::BceWithLogits(x, targets.to_vec()), &[x])
    }

    /// Exact Heaviside step at `threshold` with a surrogate backward pass.
    pub fn heaviside_ste(&mut self, x: Var, threshold: f64, surrogate: Surrogate) -> Result<Var> {
        if !threshold.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "threshold must be finite, got {threshold}"
            )));
        }
        let out = self.value(x).map(|v| heaviside(v, threshold));
        self.push(
            out,
            Op::Fire {
                x,
                threshold,
                surrogate,
            },
            &[x],
        )
    }

    /// Three-valued step at `+-gamma` with one surrogate window per threshold.
    pub fn signed_heaviside_ste(
        &mut self,
        x: Var,
        gamma: f64,
        surrogate: Surrogate,
    ) -> Result<Var> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "signed threshold must be > 0, got {gamma}"
            )));
        }
        let out = self.value(x).map(|v| signed_heaviside(v, gamma));
        self.push(
            out,
            Op::SignedFire {
                x,
                threshold: gamma,
                surrogate,
            },
            &[x],
        )
    }

    /// Reverse sweep from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::ShapeMismatch {
                op: "backward",
                left: lv.shape(),
                right: (1, 1),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, op: &Op<'a>, out: &Tensor, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    let mut ga = Tensor::zeros(av.rows(), av.cols());
                    gemm(g, false, bv, true, &mut ga, 0.0);
                    self.accumulate(grads, *a, ga);
                }
                if self.wants(*b) {
                    let mut gb = Tensor::zeros(bv.rows(), bv.cols());
                    gemm(av, true, g, false, &mut gb, 0.0);
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::MatMulNt(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    let mut ga = Tensor::zeros(av.rows(), av.cols());
                    gemm(g, false, bv, false, &mut ga, 0.0);
                    self.accumulate(grads, *a, ga);
                }
                if self.wants(*b) {
                    let mut gb = Tensor::zeros(bv.rows(), bv.cols());
                    gemm(g, true, av, false, &mut gb, 0.0);
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::SpMM(m, x) => {
                let gx = m.transpose().mul_dense(g).expect("spmm backward shapes");
                self.accumulate(grads, *x, gx);
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::AddRowBroadcast(a, row) => {
                self.accumulate(grads, *a, g.clone());
                if self.wants(*row) {
                    let mut gr = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, v) in gr.data_mut().iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    self.accumulate(grads, *row, gr);
                }
            }
            Op::Scale(a, factor) => self.accumulate(grads, *a, g.scale(*factor)),
            Op::Relu(a) => {
                let mut ga = g.clone();
                for (o, &x) in ga.data_mut().iter_mut().zip(self.value(*a).data()) {
                    if x <= 0.0 {
                        *o = 0.0;
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::SoftmaxRows(a) => {
                let mut ga = Tensor::zeros(out.rows(), out.cols());
                for r in 0..out.rows() {
                    let (s, gr) = (out.row(r), g.row(r));
                    let dot: f64 = s.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for c in 0..out.cols() {
                        ga.set(r, c, s[c] * (gr[c] - dot));
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::SelectRows(a, ids) => {
                let av = self.value(*a);
                let mut ga = Tensor::zeros(av.rows(), av.cols());
                for (k, &i) in ids.iter().enumerate() {
                    for c in 0..av.cols() {
                        let cur = ga.get(i, c);
                        ga.set(i, c, cur + g.get(k, c));
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::CrossEntropy(logits, targets) => {
                let lv = self.value(*logits);
                let mut ga = softmax_rows(lv);
                let scale = g.get(0, 0) / targets.len() as f64;
                for (r, &t) in targets.iter().enumerate() {
                    let cur = ga.get(r, t);
                    ga.set(r, t, cur - 1.0);
                }
                self.accumulate(grads, *logits, ga.scale(scale));
            }
            Op::Sum(a) => {
                let av = self.value(*a);
                self.accumulate(grads, *a, Tensor::filled(av.rows(), av.cols(), g.get(0, 0)));
            }
            Op::PairDot(z, pairs) => {
                let zv = self.value(*z);
                let mut gz = Tensor::zeros(zv.rows(), zv.cols());
                let d = zv.cols();
                for (k, &(u, v)) in pairs.iter().enumerate() {
                    let gk = g.get(k, 0);
                    for c in 0..d {
                        let (zu, zvv) = (zv.get(u, c), zv.get(v, c));
                        let data = gz.data_mut();
                        data[u * d + c] += gk * zvv;
                        data[v * d + c] += gk * zu;
                    }
                }
                self.accumulate(grads, *z, gz);
            }
            Op::BceWithLogits(x, targets) => {
                let xv = self.value(*x);
                let scale = g.get(0, 0) / targets.len() as f64;
                let data = xv
                    .data()
                    .iter()
                    .zip(targets)
                    .map(|(&z, &y)| (sigmoid(z) - y) * scale)
                    .collect();
                let gx = Tensor::from_vec(xv.rows(), 1, data).expect("bce backward shape");
                self.accumulate(grads, *x, gx);
            }
            Op::Fire {
                x,
                threshold,
                surrogate,
            } => {
                let mut gx = g.clone();
                for (o, &v) in gx.data_mut().iter_mut().zip(self.value(*x).data()) {
                    *o *= surrogate.derivative(v - threshold);
                }
                self.accumulate(grads, *x, gx);
            }
            Op::SignedFire {
                x,
                threshold,
                surrogate,
            } => {
                let mut gx = g.clone();
                for (o, &v) in gx.data_mut().iter_mut().zip(self.value(*x).data()) {
                    *o *= surrogate.derivative(v.abs() - threshold);
                }
                self.accumulate(grads, *x, gx);
            }
        }
    }
}

/// Gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for `v`, or `None` if `v` does not influence the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`, materializing zeros when it does not influence the loss.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(shape.0, shape.1))
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable row-wise softmax.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    let c = x.cols();
    if c == 0 {
        return out;
    }
    for row in out.data_mut().chunks_mut(c) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

/// Mean softmax cross-entropy; `targets[r]` indexes the true class of row `r`.
pub fn cross_entropy(logits: &Tensor, targets: &[usize]) -> f64 {
    let mut total = 0.0;
    for (r, &t) in targets.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[t];
    }
    total / targets.len() as f64
}

/// Outcome of [`check_gradients`].
#[derive(Clone, Debug, PartialEq)]
pub enum GradCheck {
    /// Maximum relative error per parameter, in parameter order.
    Checked { max_rel_error: Vec<f64>, rtol: f64 },
    /// The computation contains a fire op; finite differences are meaningless there.
    SkippedSurrogatePath,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        match self {
            GradCheck::Checked {
                max_rel_error,
                rtol,
            } => max_rel_error.iter().all(|e| e <= rtol),
            GradCheck::SkippedSurrogatePath => false,
        }
    }

    pub fn is_skipped(&self) -> bool {
        matches!(self, GradCheck::SkippedSurrogatePath)
    }

    pub fn worst(&self) -> f64 {
        match self {
            GradCheck::Checked { max_rel_error, .. } => {
                max_rel_error.iter().copied().fold(0.0, f64::max)
            }
            GradCheck::SkippedSurrogatePath => f64::NAN,
        }
    }
}

impl std::fmt::Display for GradCheck {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GradCheck::Checked {
                max_rel_error,
                rtol,
            } => {
                write!(f, "max relative error {:.3e} (rtol {rtol:e})", self.worst())?;
                if max_rel_error.is_empty() {
                    write!(f, ", no parameters")?;
                }
                Ok(())
            }
            GradCheck::SkippedSurrogatePath => write!(f, "surrogate path — FD check skipped"),
        }
    }
}

pub const DEFAULT_FD_EPS: f64 = 1e-5;
pub const DEFAULT_FD_RTOL: f64 = 1e-4;

/// Relative error with an absolute floor so that vanishing gradients are
/// compared on an absolute scale.
fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares reverse-mode gradients of a scalar computation against central
/// finite differences.
///
/// `f` receives a fresh tape and one tracked leaf per entry of `params`.
pub fn check_gradients<'a, F>(f: F, params: &[Tensor], eps: f64, rtol: f64) -> Result<GradCheck>
where
    F: Fn(&mut Tape<'a>, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut tape: Tape<'a> = Tape::new();
        let vars = values
            .iter()
            .map(|p| tape.constant(p.clone()))
            .collect::<Result<Vec<_>>>()?;
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).get(0, 0))
    };

    let mut tape: Tape<'a> = Tape::new();
    let vars = params
        .iter()
        .map(|p| tape.param(p.clone()))
        .collect::<Result<Vec<_>>>()?;
    let out = f(&mut tape, &vars)?;
    if tape.has_fire() {
        return Ok(GradCheck::SkippedSurrogatePath);
    }
    let grads = tape.backward(out)?;

    let mut work: Vec<Tensor> = params.to_vec();
    let mut max_rel_error = Vec::with_capacity(params.len());
    for (p, var) in vars.iter().enumerate() {
        let analytic = grads.get_or_zeros(*var, params[p].shape());
        let mut worst: f64 = 0.0;
        for i in 0..params[p].len() {
            let orig = work[p].data()[i];
            work[p].data_mut()[i] = orig + eps;
            let plus = eval(&work)?;
            work[p].data_mut()[i] = orig - eps;
            let minus = eval(&work)?;
            work[p].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            worst = worst.max(relative_error(analytic.data()[i], numeric));
        }
        max_rel_error.push(worst);
    }
    Ok(GradCheck::Checked {
        max_rel_error,
        rtol,
    })
}
