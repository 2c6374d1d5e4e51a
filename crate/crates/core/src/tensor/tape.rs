use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use ndarray::{concatenate, Array2, Axis};

use crate::error::{Error, Result};

use super::{CsrMatrix, Matrix};

static NEXT_TAPE_ID: AtomicUsize = AtomicUsize::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var {
    tape: usize,
    idx: usize,
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    Scale(Var, f64),
    ConcatCols(Var, Var),
    Transpose(Var),
    RowSum(Var),
    Sum(Var),
    GatherRows(Var, Vec<usize>),
    BroadcastRowDiv(Var, Var),
    Reshape(Var),
    Sigmoid(Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    Exp(Var),
    Log(Var),
    Powf(Var, f64),
    MaskedRowSoftmax(Var),
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        weights: Option<Vec<f64>>,
        probs: Matrix,
    },
    CosineColumnDistanceSum(Var, Var),
    Propagate(Var, Arc<CsrMatrix>),
    NeighborAttention {
        src: Var,
        dst: Var,
        values: Var,
        pattern: Arc<CsrMatrix>,
        slope: f64,
        alpha: Vec<f64>,
        pre: Vec<f64>,
    },
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        use Op::*;
        match self {
            Leaf => vec![],
            MatMul(a, b)
            | Add(a, b)
            | Sub(a, b)
            | Hadamard(a, b)
            | ConcatCols(a, b)
            | BroadcastRowDiv(a, b)
            | CosineColumnDistanceSum(a, b) => vec![*a, *b],
            Scale(a, _)
            | Transpose(a)
            | RowSum(a)
            | Sum(a)
            | GatherRows(a, _)
            | Reshape(a)
            | Sigmoid(a)
            | Relu(a)
            | LeakyRelu(a, _)
            | Exp(a)
            | Log(a)
            | Powf(a, _)
            | MaskedRowSoftmax(a)
            | Propagate(a, _) => vec![*a],
            CrossEntropy { logits, .. } => vec![*logits],
            NeighborAttention {
                src, dst, values, ..
            } => vec![*src, *dst, *values],
        }
    }
}

struct Node {
    op: Op,
    value: Arc<Matrix>,
    needs_grad: bool,
    trainable: bool,
}

/// Cosine terms for columns whose norm falls at or below this are defined as 1.
pub const COSINE_EPS: f64 = 1e-12;

/// Append-only record of a computation, differentiated in reverse by
/// [`Tape::backward`].
///
/// Nodes are stored in creation order, which is a topological order because
/// every op can only reference handles that already exist.
pub struct Tape {
    id: usize,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A value that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.leaf(Arc::new(value), false)
    }

    /// A constant shared with the caller without copying.
    pub fn constant_shared(&mut self, value: Arc<Matrix>) -> Var {
        self.leaf(value, false)
    }

    /// A trainable leaf; [`Tape::backward`] reports its gradient.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.leaf(Arc::new(value), true)
    }

    pub fn leaf(&mut self, value: Arc<Matrix>, requires_grad: bool) -> Var {
        let idx = self.nodes.len();
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
            needs_grad: requires_grad,
            trainable: requires_grad,
        });
        Var { tape: self.id, idx }
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[self.check(v)].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).dim()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        debug_assert_eq!(m.dim(), (1, 1));
        m[[0, 0]]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[self.check(v)].needs_grad
    }

    fn check(&self, v: Var) -> usize {
        assert_eq!(v.tape, self.id, "handle belongs to a different tape");
        v.idx
    }

    fn owns(&self, v: Var) -> bool {
        v.tape == self.id && v.idx < self.nodes.len()
    }

    fn push(&mut self, op_name: &'static str, op: Op, value: Matrix) -> Result<Var> {
        if value.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { op: op_name });
        }
        let needs_grad = op
            .inputs()
            .iter()
            .any(|&i| self.nodes[self.check(i)].needs_grad);
        let idx = self.nodes.len();
        self.nodes.push(Node {
            op,
            value: Arc::new(value),
            needs_grad,
            trainable: false,
        });
        Ok(Var { tape: self.id, idx })
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::Shape {
                op,
                lhs: sa,
                rhs: sb,
            });
        }
        Ok(())
    }

    // ----- linear ops -----

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.ncols() != vb.nrows() {
            return Err(Error::Shape {
                op: "matmul",
                lhs: va.dim(),
                rhs: vb.dim(),
            });
        }
        let out = va.dot(vb);
        self.push("matmul", Op::MatMul(a, b), out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.value(a) + self.value(b);
        self.push("add", Op::Add(a, b), out)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.value(a) - self.value(b);
        self.push("sub", Op::Sub(a, b), out)
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("hadamard", a, b)?;
        let out = self.value(a) * self.value(b);
        self.push("hadamard", Op::Hadamard(a, b), out)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = self.value(a) * c;
        self.push("scale", Op::Scale(a, c), out)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.nrows() != vb.nrows() {
            return Err(Error::Shape {
                op: "concat_cols",
                lhs: va.dim(),
                rhs: vb.dim(),
            });
        }
        let out = concatenate(Axis(1), &[va.view(), vb.view()]).expect("rows checked");
        self.push("concat_cols", Op::ConcatCols(a, b), out)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).t().as_standard_layout().into_owned();
        self.push("transpose", Op::Transpose(a), out)
    }

    /// m×n → m×1.
    pub fn row_sum(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push("row_sum", Op::RowSum(a), out)
    }

    /// Sum of every entry as a 1×1 value.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = Matrix::from_elem((1, 1), self.value(a).sum());
        self.push("sum", Op::Sum(a), out)
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let va = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= va.nrows()) {
            return Err(Error::Shape {
                op: "gather_rows",
                lhs: va.dim(),
                rhs: (bad, 0),
            });
        }
        let out = va.select(Axis(0), idx);
        self.push("gather_rows", Op::GatherRows(a, idx.to_vec()), out)
    }

    /// Divides row `i` of `a` (m×n) by `v[i]` (`v` is m×1).
    pub fn broadcast_row_div(&mut self, a: Var, v: Var) -> Result<Var> {
        let (va, vv) = (self.value(a), self.value(v));
        if vv.dim() != (va.nrows(), 1) {
            return Err(Error::Shape {
                op: "broadcast_row_div",
                lhs: va.dim(),
                rhs: vv.dim(),
            });
        }
        let out = va / vv;
        self.push("broadcast_row_div", Op::BroadcastRowDiv(a, v), out)
    }

    /// Row-major reinterpretation with a new shape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let va = self.value(a);
        if va.len() != rows * cols {
            return Err(Error::Shape {
                op: "reshape",
                lhs: va.dim(),
                rhs: (rows, cols),
            });
        }
        let data: Vec<f64> = va.iter().copied().collect();
        let out = Matrix::from_shape_vec((rows, cols), data).expect("length checked");
        self.push("reshape", Op::Reshape(a), out)
    }

    /// `p · a` for a fixed sparse operator `p`. Not differentiable in `p`.
    pub fn propagate(&mut self, p: &Arc<CsrMatrix>, a: Var) -> Result<Var> {
        let out = p.matmul_dense(self.value(a))?;
        self.push("propagate", Op::Propagate(a, Arc::clone(p)), out)
    }

    // ----- nonlinear ops -----

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).mapv(sigmoid);
        self.push("sigmoid", Op::Sigmoid(a), out)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).mapv(|x| x.max(0.0));
        self.push("relu", Op::Relu(a), out)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        let out = self.value(a).mapv(|x| if x > 0.0 { x } else { slope * x });
        self.push("leaky_relu", Op::LeakyRelu(a, slope), out)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).mapv(f64::exp);
        self.push("exp", Op::Exp(a), out)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a);
        if let Some(x) = va.iter().find(|&&x| x <= 0.0) {
            return Err(Error::Domain {
                op: "log",
                msg: format!("nonpositive input {x}"),
            });
        }
        let out = va.mapv(f64::ln);
        self.push("log", Op::Log(a), out)
    }

    /// Elementwise `x^p`.
    pub fn powf(&mut self, a: Var, p: f64) -> Result<Var> {
        let va = self.value(a);
        if p.fract() != 0.0 {
            if let Some(x) = va.iter().find(|&&x| x < 0.0) {
                return Err(Error::Domain {
                    op: "powf",
                    msg: format!("negative base {x} with fractional exponent {p}"),
                });
            }
        }
        let out = va.mapv(|x| x.powf(p));
        self.push("powf", Op::Powf(a, p), out)
    }

    /// Row-wise softmax restricted to `mask` (all entries when `None`).
    /// Masked-out entries come out as exactly 0.
    pub fn masked_row_softmax(&mut self, a: Var, mask: Option<&Array2<bool>>) -> Result<Var> {
        let va = self.value(a);
        if let Some(m) = mask {
            if m.dim() != va.dim() {
                return Err(Error::Shape {
                    op: "masked_row_softmax",
                    lhs: va.dim(),
                    rhs: m.dim(),
                });
            }
        }
        let mut out = Matrix::zeros(va.dim());
        for (i, row) in va.outer_iter().enumerate() {
            let keep = |j: usize| mask.is_none_or(|m| m[[i, j]]);
            let mut max = f64::NEG_INFINITY;
            for (j, &x) in row.iter().enumerate() {
                if keep(j) && x > max {
                    max = x;
                }
            }
            if max == f64::NEG_INFINITY {
                return Err(Error::Domain {
                    op: "masked_row_softmax",
                    msg: format!("row {i} has no unmasked entry"),
                });
            }
            let mut z = 0.0;
            for (j, &x) in row.iter().enumerate() {
                if keep(j) {
                    let e = (x - max).exp();
                    out[[i, j]] = e;
                    z += e;
                }
            }
            out.row_mut(i).mapv_inplace(|e| e / z);
        }
        self.push("masked_row_softmax", Op::MaskedRowSoftmax(a), out)
    }

    pub fn row_softmax(&mut self, a: Var) -> Result<Var> {
        self.masked_row_softmax(a, None)
    }

    /// Mean over examples of `-log softmax(logits)[label]`, optionally with a
    /// per-example weight multiplying each term.
    pub fn cross_entropy(
        &mut self,
        logits: Var,
        labels: &[usize],
        weights: Option<&[f64]>,
    ) -> Result<Var> {
        let vl = self.value(logits);
        let (m, c) = vl.dim();
        if m == 0 {
            return Err(Error::Domain {
                op: "cross_entropy",
                msg: "empty batch".into(),
            });
        }
        if labels.len() != m || weights.is_some_and(|w| w.len() != m) {
            return Err(Error::Shape {
                op: "cross_entropy",
                lhs: vl.dim(),
                rhs: (labels.len(), 1),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
            return Err(Error::Domain {
                op: "cross_entropy",
                msg: format!("label {bad} outside [0,{c})"),
            });
        }
        let mut probs = Matrix::zeros((m, c));
        let mut total = 0.0;
        for (i, row) in vl.outer_iter().enumerate() {
            let (arg, max) = row
                .iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |acc, (j, &x)| if x > acc.1 { (j, x) } else { acc },
                );
            let mut rest = 0.0;
            for (j, &x) in row.iter().enumerate() {
                let e = (x - max).exp();
                probs[[i, j]] = e;
                if j != arg {
                    rest += e;
                }
            }
            let z = 1.0 + rest;
            probs.row_mut(i).mapv_inplace(|e| e / z);
            // log-sum-exp written around the argmax keeps saturated terms exact
            let nll = rest.ln_1p() + max - row[labels[i]];
            total += weights.map_or(1.0, |w| w[i]) * nll;
        }
        let out = Matrix::from_elem((1, 1), total / m as f64);
        self.push(
            "cross_entropy",
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                weights: weights.map(|w| w.to_vec()),
                probs,
            },
            out,
        )
    }

    /// `Σ_h (1 − cos(a[:,h], b[:,h]))`. A column pair where either norm is at
    /// most [`COSINE_EPS`] contributes 1 and no gradient.
    pub fn cosine_column_distance_sum(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("cosine_column_distance_sum", a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let mut total = 0.0;
        for (ca, cb) in va.columns().into_iter().zip(vb.columns()) {
            let (na, nb) = (ca.dot(&ca).sqrt(), cb.dot(&cb).sqrt());
            if na <= COSINE_EPS || nb <= COSINE_EPS {
                total += 1.0;
            } else {
                total += 1.0 - ca.dot(&cb) / (na * nb);
            }
        }
        let out = Matrix::from_elem((1, 1), total);
        self.push(
            "cosine_column_distance_sum",
            Op::CosineColumnDistanceSum(a, b),
            out,
        )
    }

    /// Single-head graph attention over a fixed neighborhood pattern.
    ///
    /// For each stored entry `(i, j)` of `pattern`: `e_ij = leaky(src_i + dst_j)`,
    /// `α_i· = softmax(e_i·)` over the row, and `out_i = Σ_j α_ij values_j`.
    /// `src` and `dst` are N×1 score columns, `values` is N×F. Pattern values
    /// are ignored; only the sparsity structure matters. Every row of the
    /// pattern must be nonempty.
    pub fn neighbor_attention(
        &mut self,
        pattern: &Arc<CsrMatrix>,
        src: Var,
        dst: Var,
        values: Var,
        slope: f64,
    ) -> Result<Var> {
        let n = pattern.rows();
        let (vs, vd, vv) = (self.value(src), self.value(dst), self.value(values));
        if vs.dim() != (n, 1) || vd.dim() != (pattern.cols(), 1) || vv.nrows() != pattern.cols() {
            return Err(Error::Shape {
                op: "neighbor_attention",
                lhs: (n, pattern.cols()),
                rhs: vv.dim(),
            });
        }
        let (alpha, pre) = attention_coefficients(pattern, vs, vd, slope)?;
        let f = vv.ncols();
        let mut out = Matrix::zeros((n, f));
        for i in 0..n {
            let (a, b) = (pattern.indptr()[i], pattern.indptr()[i + 1]);
            let mut row = out.row_mut(i);
            // CSR positions index both the pattern and the coefficients
            #[allow(clippy::needless_range_loop)]
            for k in a..b {
                let j = pattern.indices()[k];
                row.scaled_add(alpha[k], &vv.row(j));
            }
        }
        self.push(
            "neighbor_attention",
            Op::NeighborAttention {
                src,
                dst,
                values,
                pattern: Arc::clone(pattern),
                slope,
                alpha,
                pre,
            },
            out,
        )
    }

    /// Reverse pass from the scalar `loss`. Consumes the tape and returns the
    /// gradient of every trainable leaf (zeros for leaves the loss does not
    /// reach).
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        if !self.owns(loss) {
            return Err(Error::Domain {
                op: "backward",
                msg: "loss handle is not on this tape".into(),
            });
        }
        let shape = self.nodes[loss.idx].value.dim();
        if shape != (1, 1) {
            return Err(Error::Shape {
                op: "backward",
                lhs: shape,
                rhs: (1, 1),
            });
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[loss.idx].needs_grad {
            grads[loss.idx] = Some(Matrix::from_elem((1, 1), 1.0));
        }
        for idx in (0..=loss.idx).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if node.trainable {
                grads[idx] = Some(g);
                continue;
            }
            self.backprop_node(node, &g, &mut grads);
        }
        let mut out = HashMap::new();
        for (idx, node) in self.nodes.iter().enumerate() {
            if node.trainable {
                let g = grads[idx]
                    .take()
                    .unwrap_or_else(|| Matrix::zeros(node.value.dim()));
                out.insert(Var { tape: self.id, idx }, g);
            }
        }
        Ok(Gradients { grads: out })
    }

    fn backprop_node(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) {
        use Op::*;
        let val = |v: Var| -> &Matrix { &self.nodes[v.idx].value };
        let want = |v: Var| self.nodes[v.idx].needs_grad;
        let mut acc = |v: Var, d: Matrix| {
            if !self.nodes[v.idx].needs_grad {
                return;
            }
            match &mut grads[v.idx] {
                Some(existing) => *existing += &d,
                slot @ None => *slot = Some(d),
            }
        };
        match &node.op {
            Leaf => {}
            MatMul(a, b) => {
                if want(*a) {
                    acc(*a, g.dot(&val(*b).t()));
                }
                if want(*b) {
                    acc(*b, val(*a).t().dot(g));
                }
            }
            Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, -g);
            }
            Hadamard(a, b) => {
                if want(*a) {
                    acc(*a, g * val(*b));
                }
                if want(*b) {
                    acc(*b, g * val(*a));
                }
            }
            Scale(a, c) => acc(*a, g * *c),
            ConcatCols(a, b) => {
                let ca = val(*a).ncols();
                acc(*a, g.slice(ndarray::s![.., ..ca]).to_owned());
                acc(*b, g.slice(ndarray::s![.., ca..]).to_owned());
            }
            Transpose(a) => acc(*a, g.t().as_standard_layout().into_owned()),
            RowSum(a) => {
                let (r, c) = val(*a).dim();
                let mut d = Matrix::zeros((r, c));
                for i in 0..r {
                    d.row_mut(i).fill(g[[i, 0]]);
                }
                acc(*a, d);
            }
            Sum(a) => acc(*a, Matrix::from_elem(val(*a).dim(), g[[0, 0]])),
            GatherRows(a, idx) => {
                if want(*a) {
                    let mut d = Matrix::zeros(val(*a).dim());
                    for (k, &i) in idx.iter().enumerate() {
                        let mut row = d.row_mut(i);
                        row += &g.row(k);
                    }
                    acc(*a, d);
                }
            }
            BroadcastRowDiv(a, v) => {
                let (va, vv) = (val(*a), val(*v));
                if want(*a) {
                    acc(*a, g / vv);
                }
                if want(*v) {
                    let mut d = Matrix::zeros(vv.dim());
                    for i in 0..va.nrows() {
                        let s: f64 = g.row(i).dot(&va.row(i));
                        d[[i, 0]] = -s / (vv[[i, 0]] * vv[[i, 0]]);
                    }
                    acc(*v, d);
                }
            }
            Reshape(a) => {
                let data: Vec<f64> = g.iter().copied().collect();
                acc(
                    *a,
                    Matrix::from_shape_vec(val(*a).dim(), data).expect("same length"),
                );
            }
            Sigmoid(a) => {
                let s = &node.value;
                let mut d = g.clone();
                ndarray::Zip::from(&mut d)
                    .and(&**s)
                    .for_each(|d, &s| *d *= s * (1.0 - s));
                acc(*a, d);
            }
            Relu(a) => {
                let mut d = g.clone();
                ndarray::Zip::from(&mut d).and(val(*a)).for_each(|d, &x| {
                    if x <= 0.0 {
                        *d = 0.0
                    }
                });
                acc(*a, d);
            }
            LeakyRelu(a, slope) => {
                let mut d = g.clone();
                ndarray::Zip::from(&mut d).and(val(*a)).for_each(|d, &x| {
                    if x <= 0.0 {
                        *d *= slope
                    }
                });
                acc(*a, d);
            }
            Exp(a) => acc(*a, g * &*node.value),
            Log(a) => acc(*a, g / val(*a)),
            Powf(a, p) => {
                let p = *p;
                let mut d = g.clone();
                ndarray::Zip::from(&mut d)
                    .and(val(*a))
                    .for_each(|d, &x| *d *= p * x.powf(p - 1.0));
                acc(*a, d);
            }
            MaskedRowSoftmax(a) => {
                let s = &*node.value;
                let mut d = Matrix::zeros(s.dim());
                for i in 0..s.nrows() {
                    let dot = s.row(i).dot(&g.row(i));
                    for j in 0..s.ncols() {
                        d[[i, j]] = s[[i, j]] * (g[[i, j]] - dot);
                    }
                }
                acc(*a, d);
            }
            CrossEntropy {
                logits,
                labels,
                weights,
                probs,
            } => {
                let m = labels.len() as f64;
                let mut d = probs.clone();
                for (i, &y) in labels.iter().enumerate() {
                    d[[i, y]] -= 1.0;
                    let w = weights.as_ref().map_or(1.0, |w| w[i]);
                    d.row_mut(i).mapv_inplace(|x| x * w * g[[0, 0]] / m);
                }
                acc(*logits, d);
            }
            CosineColumnDistanceSum(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let mut da = Matrix::zeros(va.dim());
                let mut db = Matrix::zeros(vb.dim());
                let up = g[[0, 0]];
                for h in 0..va.ncols() {
                    let (ca, cb) = (va.column(h), vb.column(h));
                    let (na, nb) = (ca.dot(&ca).sqrt(), cb.dot(&cb).sqrt());
                    if na <= COSINE_EPS || nb <= COSINE_EPS {
                        continue;
                    }
                    let dot = ca.dot(&cb);
                    let nab = na * nb;
                    // d(-cos)/da = -(b/(|a||b|) - dot·a/(|a|³|b|))
                    for r in 0..va.nrows() {
                        da[[r, h]] = -up * (cb[r] / nab - dot * ca[r] / (na * na * nab));
                        db[[r, h]] = -up * (ca[r] / nab - dot * cb[r] / (nb * nb * nab));
                    }
                }
                acc(*a, da);
                acc(*b, db);
            }
            Propagate(a, p) => {
                if want(*a) {
                    acc(
                        *a,
                        p.transpose_matmul_dense(g).expect("shape fixed at forward"),
                    );
                }
            }
            NeighborAttention {
                src,
                dst,
                values,
                pattern,
                slope,
                alpha,
                pre,
            } => {
                let vv = val(*values);
                let n = pattern.rows();
                let mut dv = Matrix::zeros(vv.dim());
                let mut ds = Matrix::zeros((n, 1));
                let mut dd = Matrix::zeros((pattern.cols(), 1));
                let need_scores = want(*src) || want(*dst);
                let mut dalpha: Vec<f64> = Vec::new();
                for i in 0..n {
                    let (lo, hi) = (pattern.indptr()[i], pattern.indptr()[i + 1]);
                    let gi = g.row(i);
                    dalpha.clear();
                    // CSR positions index both the pattern and the coefficients
                    #[allow(clippy::needless_range_loop)]
                    for k in lo..hi {
                        let j = pattern.indices()[k];
                        if want(*values) {
                            let mut r = dv.row_mut(j);
                            r.scaled_add(alpha[k], &gi);
                        }
                        if need_scores {
                            dalpha.push(gi.dot(&vv.row(j)));
                        }
                    }
                    if need_scores {
                        let mean: f64 = (lo..hi).zip(&dalpha).map(|(k, da)| alpha[k] * da).sum();
                        for (k, da) in (lo..hi).zip(&dalpha) {
                            let de = alpha[k] * (da - mean);
                            let dpre = if pre[k] > 0.0 { de } else { de * slope };
                            ds[[i, 0]] += dpre;
                            dd[[pattern.indices()[k], 0]] += dpre;
                        }
                    }
                }
                acc(*values, dv);
                acc(*src, ds);
                acc(*dst, dd);
            }
        }
    }
}

/// Per-entry attention weights and pre-activation scores, aligned with the
/// pattern's storage order.
pub(crate) fn attention_coefficients(
    pattern: &CsrMatrix,
    src: &Matrix,
    dst: &Matrix,
    slope: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut alpha = vec![0.0; pattern.nnz()];
    let mut pre = vec![0.0; pattern.nnz()];
    for i in 0..pattern.rows() {
        let (lo, hi) = (pattern.indptr()[i], pattern.indptr()[i + 1]);
        if lo == hi {
            return Err(Error::Domain {
                op: "neighbor_attention",
                msg: format!("node {i} has an empty neighborhood"),
            });
        }
        let mut max = f64::NEG_INFINITY;
        for k in lo..hi {
            let j = pattern.indices()[k];
            let x = src[[i, 0]] + dst[[j, 0]];
            pre[k] = x;
            let e = if x > 0.0 { x } else { slope * x };
            alpha[k] = e;
            max = max.max(e);
        }
        let mut z = 0.0;
        for a in &mut alpha[lo..hi] {
            *a = (*a - max).exp();
            z += *a;
        }
        for a in &mut alpha[lo..hi] {
            *a /= z;
        }
    }
    Ok((alpha, pre))
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Gradients of trainable leaves after [`Tape::backward`].
#[derive(Debug, Default)]
pub struct Gradients {
    grads: HashMap<Var, Matrix>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(&v)
    }

    pub fn take(&mut self, v: Var) -> Option<Matrix> {
        self.grads.remove(&v)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}
