//! Tape of matrix operations with reverse-mode differentiation.
//!
//! Every node holds an `f64` matrix. Scalars are 1×1 matrices. Nodes are
//! appended in evaluation order, so a single reverse sweep over the tape
//! propagates gradients.

use crate::error::{NetError, Result};
use crate::linalg::{cholesky, inverse_from_factor, logdet_from_factor};
use crate::Mat;
use ndarray::{s, Array2, Axis, Zip};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    /// Differentiable input (parameters and probed inputs).
    Leaf,
    /// Value with no upstream; also produced by `stop_gradient`.
    Const,
    MatMul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    /// Rounding to a grid; differentiated as the identity.
    Snap(NodeId),
    Relu(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Softplus(NodeId),
    ConcatCols(Vec<NodeId>),
    RowSlice(NodeId, usize),
    SoftmaxCe { logits: NodeId, labels: Vec<usize>, probs: Mat },
    CosineRows(NodeId, NodeId),
    Mean(NodeId),
    MeanSqRowNorm(NodeId),
    Gram { z: NodeId, outer: bool },
    AddScaledIdentity(NodeId, f64),
    LogDetSpd { a: NodeId, inv: Mat },
}

#[derive(Debug, Clone)]
struct Node {
    value: Mat,
    op: Op,
}

/// A computation tape. Build a fresh one per minibatch.
#[derive(Debug, Default, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of one scalar output with respect to every node on the tape.
#[derive(Debug, Clone)]
pub struct Grads {
    grads: Vec<Option<Mat>>,
    shapes: Vec<(usize, usize)>,
}

impl Grads {
    /// Gradient for `id`; zeros when nothing flowed into it.
    pub fn get(&self, id: NodeId) -> Mat {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => Array2::zeros(self.shapes[id.0]),
        }
    }

    /// Whether any gradient reached `id`.
    pub fn reached(&self, id: NodeId) -> bool {
        self.grads[id.0].is_some()
    }
}

fn shape(m: &Mat) -> (usize, usize) {
    (m.nrows(), m.ncols())
}

fn check_same(a: &Mat, b: &Mat, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(NetError::InvalidInput(format!(
            "{what}: shape mismatch {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise cosine similarity, defined as 0 when either row has zero norm.
pub fn cosine_rows(a: &Mat, b: &Mat) -> Mat {
    let mut out = Array2::zeros((a.nrows(), 1));
    for (i, (ra, rb)) in a.rows().into_iter().zip(b.rows()).enumerate() {
        let na = ra.dot(&ra).sqrt();
        let nb = rb.dot(&rb).sqrt();
        if na > 0.0 && nb > 0.0 {
            out[[i, 0]] = ra.dot(&rb) / (na * nb);
        }
    }
    out
}

/// Row-wise numerically stable softmax.
pub fn softmax_rows(logits: &Mat) -> Mat {
    let mut p = logits.clone();
    for mut row in p.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    p
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Mat, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Mat {
        &self.nodes[id.0].value
    }

    /// Value of a 1×1 node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value[[0, 0]]
    }

    /// Differentiable input.
    pub fn leaf(&mut self, value: Mat) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, value: Mat) -> NodeId {
        self.push(value, Op::Const)
    }

    /// Value-identical copy of `x` that passes no gradient upstream.
    pub fn stop_gradient(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).clone();
        self.constant(v)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.ncols() != vb.nrows() {
            return Err(NetError::InvalidInput(format!(
                "matmul: {:?} x {:?}",
                va.shape(),
                vb.shape()
            )));
        }
        let v = va.dot(vb);
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    /// Adds a 1×d bias row to every row of an n×d matrix.
    pub fn add_bias(&mut self, x: NodeId, b: NodeId) -> Result<NodeId> {
        let (vx, vb) = (self.value(x), self.value(b));
        if vb.nrows() != 1 || vb.ncols() != vx.ncols() {
            return Err(NetError::InvalidInput(format!(
                "add_bias: {:?} + {:?}",
                vx.shape(),
                vb.shape()
            )));
        }
        let v = vx + vb;
        Ok(self.push(v, Op::AddBias(x, b)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        check_same(self.value(a), self.value(b), "add")?;
        let v = self.value(a) + self.value(b);
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        check_same(self.value(a), self.value(b), "sub")?;
        let v = self.value(a) - self.value(b);
        Ok(self.push(v, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        check_same(self.value(a), self.value(b), "mul")?;
        let v = self.value(a) * self.value(b);
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let v = self.value(x) * c;
        self.push(v, Op::Scale(x, c))
    }

    /// Rounds every entry of `x` to the nearest multiple of the matching entry
    /// of `grid` (see [`crate::exact`]). The gradient passes through unchanged.
    pub fn snap(&mut self, x: NodeId, grid: &Mat) -> Result<NodeId> {
        check_same(self.value(x), grid, "snap")?;
        let v = crate::exact::snap_to_grid(self.value(x), grid);
        Ok(self.push(v, Op::Snap(x)))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).mapv(|a| a.max(0.0));
        self.push(v, Op::Relu(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).mapv(f64::tanh);
        self.push(v, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).mapv(sigmoid);
        self.push(v, Op::Sigmoid(x))
    }

    pub fn softplus(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).mapv(softplus);
        self.push(v, Op::Softplus(x))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(NetError::InvalidInput("concat_cols: no inputs".into()));
        }
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views)
            .map_err(|e| NetError::InvalidInput(format!("concat_cols: {e}")))?;
        Ok(self.push(v, Op::ConcatCols(parts.to_vec())))
    }

    /// Rows `start..start + len` of `x`.
    pub fn row_slice(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let vx = self.value(x);
        if start + len > vx.nrows() || len == 0 {
            return Err(NetError::InvalidInput(format!(
                "row_slice {start}+{len} out of {} rows",
                vx.nrows()
            )));
        }
        let v = vx.slice(s![start..start + len, ..]).to_owned();
        Ok(self.push(v, Op::RowSlice(x, start)))
    }

    /// Mean softmax cross-entropy of `logits` (n×k) against `labels`.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let vl = self.value(logits);
        let k = vl.ncols();
        if labels.len() != vl.nrows() {
            return Err(NetError::InvalidInput(format!(
                "softmax_cross_entropy: {} labels for {} rows",
                labels.len(),
                vl.nrows()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
            return Err(NetError::InvalidInput(format!(
                "softmax_cross_entropy: label {bad} out of range for {k} classes"
            )));
        }
        let mut total = 0.0;
        for (row, &y) in vl.rows().into_iter().zip(labels) {
            let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
            total += lse - row[y];
        }
        let probs = softmax_rows(vl);
        let v = Array2::from_elem((1, 1), total / labels.len() as f64);
        Ok(self.push(
            v,
            Op::SoftmaxCe { logits, labels: labels.to_vec(), probs },
        ))
    }

    /// Row-wise cosine similarity of two n×d matrices, as an n×1 column.
    pub fn cosine_rows(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        check_same(self.value(a), self.value(b), "cosine_rows")?;
        let v = cosine_rows(self.value(a), self.value(b));
        Ok(self.push(v, Op::CosineRows(a, b)))
    }

    /// Mean over all entries, as 1×1.
    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let vx = self.value(x);
        let v = Array2::from_elem((1, 1), vx.sum() / vx.len() as f64);
        self.push(v, Op::Mean(x))
    }

    /// Mean over rows of the squared row norm, as 1×1.
    pub fn mean_sq_row_norm(&mut self, x: NodeId) -> NodeId {
        let vx = self.value(x);
        let v = Array2::from_elem((1, 1), vx.iter().map(|a| a * a).sum::<f64>() / vx.nrows() as f64);
        self.push(v, Op::MeanSqRowNorm(x))
    }

    /// `Z Zᵀ` when `outer`, otherwise `Zᵀ Z`.
    pub fn gram(&mut self, z: NodeId, outer: bool) -> NodeId {
        let vz = self.value(z);
        let v = if outer { vz.dot(&vz.t()) } else { vz.t().dot(vz) };
        self.push(v, Op::Gram { z, outer })
    }

    /// `I + c·X` for square `X`.
    pub fn add_scaled_identity(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        let vx = self.value(x);
        if vx.nrows() != vx.ncols() {
            return Err(NetError::InvalidInput("add_scaled_identity needs a square matrix".into()));
        }
        let mut v = vx * c;
        for i in 0..v.nrows() {
            v[[i, i]] += 1.0;
        }
        Ok(self.push(v, Op::AddScaledIdentity(x, c)))
    }

    /// Natural-log determinant of a symmetric positive-definite node, via Cholesky.
    pub fn logdet_spd(&mut self, a: NodeId) -> Result<NodeId> {
        let l = cholesky(self.value(a))?;
        let v = Array2::from_elem((1, 1), logdet_from_factor(&l));
        let inv = inverse_from_factor(&l);
        Ok(self.push(v, Op::LogDetSpd { a, inv }))
    }

    /// Reverse sweep from the 1×1 node `out`.
    pub fn backward(&self, out: NodeId) -> Grads {
        let n = self.nodes.len();
        let mut grads: Vec<Option<Mat>> = vec![None; n];
        grads[out.0] = Some(Array2::ones(shape(&self.nodes[out.0].value)));
        fn acc(grads: &mut [Option<Mat>], id: NodeId, g: Mat) {
            match &mut grads[id.0] {
                Some(cur) => *cur += &g,
                slot @ None => *slot = Some(g),
            }
        }
        for i in (0..=out.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf | Op::Const) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            match &node.op {
                Op::Leaf | Op::Const => unreachable!(),
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::AddBias(x, b) => {
                    let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut grads, *b, gb);
                    acc(&mut grads, *x, g.clone());
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, -&g);
                    acc(&mut grads, *a, g.clone());
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = &g * self.value(*a);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Scale(x, c) => acc(&mut grads, *x, &g * *c),
                Op::Snap(x) => acc(&mut grads, *x, g.clone()),
                Op::Relu(x) => {
                    let mut gx = g.clone();
                    Zip::from(&mut gx).and(self.value(*x)).for_each(|d, &v| {
                        if v <= 0.0 {
                            *d = 0.0
                        }
                    });
                    acc(&mut grads, *x, gx);
                }
                Op::Tanh(x) => {
                    let mut gx = g.clone();
                    Zip::from(&mut gx).and(&node.value).for_each(|d, &y| *d *= 1.0 - y * y);
                    acc(&mut grads, *x, gx);
                }
                Op::Sigmoid(x) => {
                    let mut gx = g.clone();
                    Zip::from(&mut gx).and(&node.value).for_each(|d, &y| *d *= y * (1.0 - y));
                    acc(&mut grads, *x, gx);
                }
                Op::Softplus(x) => {
                    let mut gx = g.clone();
                    Zip::from(&mut gx).and(self.value(*x)).for_each(|d, &v| *d *= sigmoid(v));
                    acc(&mut grads, *x, gx);
                }
                Op::ConcatCols(parts) => {
                    let mut c0 = 0;
                    for p in parts {
                        let w = self.value(*p).ncols();
                        acc(&mut grads, *p, g.slice(s![.., c0..c0 + w]).to_owned());
                        c0 += w;
                    }
                }
                Op::RowSlice(x, start) => {
                    let mut gx = Array2::zeros(shape(self.value(*x)));
                    gx.slice_mut(s![*start..*start + g.nrows(), ..]).assign(&g);
                    acc(&mut grads, *x, gx);
                }
                Op::SoftmaxCe { logits, labels, probs } => {
                    let scale = g[[0, 0]] / labels.len() as f64;
                    let mut gl = probs.clone();
                    for (r, &y) in labels.iter().enumerate() {
                        gl[[r, y]] -= 1.0;
                    }
                    gl *= scale;
                    acc(&mut grads, *logits, gl);
                }
                Op::CosineRows(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let mut ga = Array2::zeros(shape(va));
                    let mut gb = Array2::zeros(shape(vb));
                    for r in 0..va.nrows() {
                        let (ra, rb) = (va.row(r), vb.row(r));
                        let na = ra.dot(&ra).sqrt();
                        let nb = rb.dot(&rb).sqrt();
                        if na == 0.0 || nb == 0.0 {
                            continue;
                        }
                        let sim = node.value[[r, 0]];
                        let gr = g[[r, 0]];
                        let inv = 1.0 / (na * nb);
                        for c in 0..va.ncols() {
                            ga[[r, c]] = gr * (rb[c] * inv - sim * ra[c] / (na * na));
                            gb[[r, c]] = gr * (ra[c] * inv - sim * rb[c] / (nb * nb));
                        }
                    }
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Mean(x) => {
                    let vx = self.value(*x);
                    let c = g[[0, 0]] / vx.len() as f64;
                    acc(&mut grads, *x, Array2::from_elem(shape(vx), c));
                }
                Op::MeanSqRowNorm(x) => {
                    let vx = self.value(*x);
                    let c = 2.0 * g[[0, 0]] / vx.nrows() as f64;
                    acc(&mut grads, *x, vx * c);
                }
                Op::Gram { z, outer } => {
                    let vz = self.value(*z);
                    let sym = &g + &g.t();
                    let gz = if *outer { sym.dot(vz) } else { vz.dot(&sym) };
                    acc(&mut grads, *z, gz);
                }
                Op::AddScaledIdentity(x, c) => acc(&mut grads, *x, &g * *c),
                Op::LogDetSpd { a, inv } => acc(&mut grads, *a, inv * g[[0, 0]]),
            }
        }
        Grads { grads, shapes: self.nodes.iter().map(|n| shape(&n.value)).collect() }
    }
}
