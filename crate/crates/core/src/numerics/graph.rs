//! Reverse-mode computation graph over dense tensors.
//!
//! Nodes are appended in evaluation order, so node ids double as a
//! topological order counter and the backward pass is a single reverse
//! sweep that visits every node exactly once. Gradients of shared
//! subexpressions accumulate by addition.
//!
//! Every op validates its output for finiteness: a NaN or Inf anywhere
//! surfaces as [`NumericsError::NonFinite`] instead of propagating.

use std::sync::Arc;

use super::tensor::{NumericsError, Tensor};

/// Handle to a node in a [`Graph`]. Ids are assigned in topological order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Boolean attention mask over a square score matrix; `true` = attend.
#[derive(Debug, Clone)]
pub struct AttnMask {
    rows: usize,
    cols: usize,
    allowed: Vec<bool>,
}

impl AttnMask {
    pub fn new(rows: usize, cols: usize, allowed: Vec<bool>) -> Result<Self, NumericsError> {
        if allowed.len() != rows * cols {
            return Err(NumericsError::InvalidArgument {
                op: "AttnMask::new",
                reason: format!(
                    "mask length {} does not match {}x{}",
                    allowed.len(),
                    rows,
                    cols
                ),
            });
        }
        if (0..rows).any(|r| !allowed[r * cols..(r + 1) * cols].iter().any(|&a| a)) {
            return Err(NumericsError::InvalidArgument {
                op: "AttnMask::new",
                reason: "every row must allow at least one position".into(),
            });
        }
        Ok(Self {
            rows,
            cols,
            allowed,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn allows(&self, row: usize, col: usize) -> bool {
        self.allowed[row * self.cols + col]
    }
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    MatMul,
    MatMulNT,
    Add,
    AddRow,
    Scale(f64),
    Relu,
    Ln,
    LayerNorm,
    SoftmaxRows,
    MaskedSoftmaxRows(Arc<AttnMask>),
    SliceCols { start: usize, len: usize },
    ConcatCols,
    ConcatRows,
    GatherRows(Vec<usize>),
    SumAll,
    BceWithLogits { targets: Arc<Vec<f64>> },
}

struct Node {
    op: Op,
    inputs: Vec<NodeId>,
    value: Tensor,
}

/// Per-node gradients produced by [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Tensor>,
}

impl Gradients {
    /// Gradient of the loss with respect to the given node's value.
    pub fn wrt(&self, id: NodeId) -> &Tensor {
        &self.grads[id.index()]
    }
}

const LAYER_NORM_EPS: f64 = 1e-5;

/// Append-only tape of tensor operations.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.index()].value
    }

    /// Registers a leaf tensor (parameter or data constant).
    pub fn input(&mut self, t: Tensor) -> NodeId {
        self.push_unchecked(Op::Input, vec![], t)
    }

    fn push_unchecked(&mut self, op: Op, inputs: Vec<NodeId>, value: Tensor) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, inputs, value });
        id
    }

    fn push(
        &mut self,
        op_name: &'static str,
        op: Op,
        inputs: Vec<NodeId>,
        shape: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<NodeId, NumericsError> {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        if !values.iter().all(|v| v.is_finite()) {
            return Err(NumericsError::NonFinite { op: op_name });
        }
        let t = Tensor::new(shape, values)?;
        Ok(self.push_unchecked(op, inputs, t))
    }

    fn matrix_of(&self, id: NodeId, op: &'static str) -> Result<(usize, usize), NumericsError> {
        let t = self.value(id);
        if !t.is_matrix() {
            return Err(NumericsError::InvalidArgument {
                op,
                reason: format!("expected a 2-d tensor, got shape {:?}", t.shape()),
            });
        }
        Ok((t.rows(), t.cols()))
    }

    /// `a[m x k] . b[k x n]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        let (m, ka) = self.matrix_of(a, "matmul")?;
        let (kb, n) = self.matrix_of(b, "matmul")?;
        if ka != kb {
            return Err(NumericsError::ShapeMismatch {
                op: "matmul",
                lhs: self.value(a).shape().to_vec(),
                rhs: self.value(b).shape().to_vec(),
            });
        }
        let out = matmul_raw(self.value(a).values(), self.value(b).values(), m, ka, n);
        self.push("matmul", Op::MatMul, vec![a, b], vec![m, n], out)
    }

    /// `a[m x k] . transpose(b[n x k])`, i.e. pairwise row dot products.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        let (m, ka) = self.matrix_of(a, "matmul_nt")?;
        let (n, kb) = self.matrix_of(b, "matmul_nt")?;
        if ka != kb {
            return Err(NumericsError::ShapeMismatch {
                op: "matmul_nt",
                lhs: self.value(a).shape().to_vec(),
                rhs: self.value(b).shape().to_vec(),
            });
        }
        let out = matmul_nt_raw(self.value(a).values(), self.value(b).values(), m, ka, n);
        self.push("matmul_nt", Op::MatMulNT, vec![a, b], vec![m, n], out)
    }

    /// Elementwise sum of two tensors of identical shape.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(NumericsError::ShapeMismatch {
                op: "add",
                lhs: self.value(a).shape().to_vec(),
                rhs: self.value(b).shape().to_vec(),
            });
        }
        let out: Vec<f64> = self
            .value(a)
            .values()
            .iter()
            .zip(self.value(b).values())
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.value(a).shape().to_vec();
        self.push("add", Op::Add, vec![a, b], shape, out)
    }

    /// `a[r x c] + row[1 x c]` broadcast over rows.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId, NumericsError> {
        let (r, c) = self.matrix_of(a, "add_row")?;
        let (rr, rc) = self.matrix_of(row, "add_row")?;
        if rr != 1 || rc != c {
            return Err(NumericsError::ShapeMismatch {
                op: "add_row",
                lhs: self.value(a).shape().to_vec(),
                rhs: self.value(row).shape().to_vec(),
            });
        }
        let rv = self.value(row).values().to_vec();
        let out: Vec<f64> = self
            .value(a)
            .values()
            .iter()
            .enumerate()
            .map(|(i, x)| x + rv[i % c])
            .collect();
        self.push("add_row", Op::AddRow, vec![a, row], vec![r, c], out)
    }

    /// Multiplication by a compile-time constant.
    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId, NumericsError> {
        if !factor.is_finite() {
            return Err(NumericsError::InvalidArgument {
                op: "scale",
                reason: "factor must be finite".into(),
            });
        }
        let out: Vec<f64> = self.value(a).values().iter().map(|x| x * factor).collect();
        let shape = self.value(a).shape().to_vec();
        self.push("scale", Op::Scale(factor), vec![a], shape, out)
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        let out: Vec<f64> = self.value(a).values().iter().map(|x| x.max(0.0)).collect();
        let shape = self.value(a).shape().to_vec();
        self.push("relu", Op::Relu, vec![a], shape, out)
    }

    /// Elementwise natural log; non-positive inputs surface as a
    /// non-finite error rather than silent -inf.
    pub fn ln(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        let out: Vec<f64> = self.value(a).values().iter().map(|x| x.ln()).collect();
        let shape = self.value(a).shape().to_vec();
        self.push("ln", Op::Ln, vec![a], shape, out)
    }

    /// Per-row normalization to zero mean / unit variance followed by the
    /// learned affine `gain (.) x + bias`. Epsilon 1e-5 inside the root.
    pub fn layer_norm(
        &mut self,
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
    ) -> Result<NodeId, NumericsError> {
        let (r, d) = self.matrix_of(x, "layer_norm")?;
        if d < 2 {
            return Err(NumericsError::InvalidArgument {
                op: "layer_norm",
                reason: format!("row width must be at least 2, got {}", d),
            });
        }
        for (side, id) in [("gain", gain), ("bias", bias)] {
            let (gr, gc) = self.matrix_of(id, "layer_norm")?;
            if gr != 1 || gc != d {
                return Err(NumericsError::InvalidArgument {
                    op: "layer_norm",
                    reason: format!("{} must be 1x{}, got {:?}", side, d, self.value(id).shape()),
                });
            }
        }
        let gv = self.value(gain).values().to_vec();
        let bv = self.value(bias).values().to_vec();
        let xv = self.value(x).values();
        let mut out = vec![0.0; r * d];
        for row in 0..r {
            let s = &xv[row * d..(row + 1) * d];
            let mean = s.iter().sum::<f64>() / d as f64;
            let var = s.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for j in 0..d {
                out[row * d + j] = (s[j] - mean) * inv_std * gv[j] + bv[j];
            }
        }
        self.push(
            "layer_norm",
            Op::LayerNorm,
            vec![x, gain, bias],
            vec![r, d],
            out,
        )
    }

    /// Row-wise softmax with max-subtraction for stability.
    pub fn softmax_rows(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        let (r, c) = self.matrix_of(a, "softmax_rows")?;
        let xv = self.value(a).values();
        let mut out = vec![0.0; r * c];
        for row in 0..r {
            softmax_into(&xv[row * c..(row + 1) * c], &mut out[row * c..(row + 1) * c]);
        }
        self.push("softmax_rows", Op::SoftmaxRows, vec![a], vec![r, c], out)
    }

    /// Row-wise softmax restricted to the allowed entries of `mask`;
    /// masked-out entries are exactly zero.
    pub fn masked_softmax_rows(
        &mut self,
        a: NodeId,
        mask: Arc<AttnMask>,
    ) -> Result<NodeId, NumericsError> {
        let (r, c) = self.matrix_of(a, "masked_softmax_rows")?;
        if mask.rows() != r || mask.cols() != c {
            return Err(NumericsError::InvalidArgument {
                op: "masked_softmax_rows",
                reason: format!(
                    "mask is {}x{} but scores are {}x{}",
                    mask.rows(),
                    mask.cols(),
                    r,
                    c
                ),
            });
        }
        let xv = self.value(a).values();
        let mut out = vec![0.0; r * c];
        for row in 0..r {
            let mut max = f64::NEG_INFINITY;
            for col in 0..c {
                if mask.allows(row, col) {
                    max = max.max(xv[row * c + col]);
                }
            }
            let mut denom = 0.0;
            for col in 0..c {
                if mask.allows(row, col) {
                    let e = (xv[row * c + col] - max).exp();
                    out[row * c + col] = e;
                    denom += e;
                }
            }
            for col in 0..c {
                out[row * c + col] /= denom;
            }
        }
        self.push(
            "masked_softmax_rows",
            Op::MaskedSoftmaxRows(mask),
            vec![a],
            vec![r, c],
            out,
        )
    }

    /// Column window `[start, start+len)`.
    pub fn slice_cols(
        &mut self,
        a: NodeId,
        start: usize,
        len: usize,
    ) -> Result<NodeId, NumericsError> {
        let (r, c) = self.matrix_of(a, "slice_cols")?;
        if len == 0 || start + len > c {
            return Err(NumericsError::InvalidArgument {
                op: "slice_cols",
                reason: format!("window {}..{} out of {} columns", start, start + len, c),
            });
        }
        let xv = self.value(a).values();
        let mut out = Vec::with_capacity(r * len);
        for row in 0..r {
            out.extend_from_slice(&xv[row * c + start..row * c + start + len]);
        }
        self.push(
            "slice_cols",
            Op::SliceCols { start, len },
            vec![a],
            vec![r, len],
            out,
        )
    }

    /// Horizontal concatenation; all inputs must share the row count.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId, NumericsError> {
        if parts.is_empty() {
            return Err(NumericsError::InvalidArgument {
                op: "concat_cols",
                reason: "at least one input required".into(),
            });
        }
        let (r, _) = self.matrix_of(parts[0], "concat_cols")?;
        let mut total = 0;
        for &p in parts {
            let (pr, pc) = self.matrix_of(p, "concat_cols")?;
            if pr != r {
                return Err(NumericsError::ShapeMismatch {
                    op: "concat_cols",
                    lhs: self.value(parts[0]).shape().to_vec(),
                    rhs: self.value(p).shape().to_vec(),
                });
            }
            total += pc;
        }
        let mut out = Vec::with_capacity(r * total);
        for row in 0..r {
            for &p in parts {
                out.extend_from_slice(self.value(p).row_slice(row));
            }
        }
        self.push(
            "concat_cols",
            Op::ConcatCols,
            parts.to_vec(),
            vec![r, total],
            out,
        )
    }

    /// Vertical concatenation; all inputs must share the column count.
    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId, NumericsError> {
        if parts.is_empty() {
            return Err(NumericsError::InvalidArgument {
                op: "concat_rows",
                reason: "at least one input required".into(),
            });
        }
        let (_, c) = self.matrix_of(parts[0], "concat_rows")?;
        let mut total = 0;
        for &p in parts {
            let (pr, pc) = self.matrix_of(p, "concat_rows")?;
            if pc != c {
                return Err(NumericsError::ShapeMismatch {
                    op: "concat_rows",
                    lhs: self.value(parts[0]).shape().to_vec(),
                    rhs: self.value(p).shape().to_vec(),
                });
            }
            total += pr;
        }
        let mut out = Vec::with_capacity(total * c);
        for &p in parts {
            out.extend_from_slice(self.value(p).values());
        }
        self.push(
            "concat_rows",
            Op::ConcatRows,
            parts.to_vec(),
            vec![total, c],
            out,
        )
    }

    /// Row gather; repeated indices are allowed (gradients accumulate).
    pub fn gather_rows(
        &mut self,
        a: NodeId,
        indices: Vec<usize>,
    ) -> Result<NodeId, NumericsError> {
        let (r, c) = self.matrix_of(a, "gather_rows")?;
        if indices.is_empty() {
            return Err(NumericsError::InvalidArgument {
                op: "gather_rows",
                reason: "at least one index required".into(),
            });
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= r) {
            return Err(NumericsError::InvalidArgument {
                op: "gather_rows",
                reason: format!("row index {} out of {} rows", bad, r),
            });
        }
        let mut out = Vec::with_capacity(indices.len() * c);
        for &i in &indices {
            out.extend_from_slice(self.value(a).row_slice(i));
        }
        let k = indices.len();
        self.push(
            "gather_rows",
            Op::GatherRows(indices),
            vec![a],
            vec![k, c],
            out,
        )
    }

    /// Sum of all entries, as a 1x1 tensor.
    pub fn sum_all(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        let s: f64 = self.value(a).values().iter().sum();
        self.push("sum_all", Op::SumAll, vec![a], vec![1, 1], vec![s])
    }

    /// Mean multi-label binary cross-entropy between logits and fixed
    /// 0/1 targets, computed in the numerically stable logits form.
    pub fn bce_with_logits(
        &mut self,
        logits: NodeId,
        targets: Vec<f64>,
    ) -> Result<NodeId, NumericsError> {
        let t = self.value(logits);
        if targets.len() != t.numel() {
            return Err(NumericsError::InvalidArgument {
                op: "bce_with_logits",
                reason: format!(
                    "targets length {} does not match {} logits",
                    targets.len(),
                    t.numel()
                ),
            });
        }
        if !targets.iter().all(|v| (0.0..=1.0).contains(v)) {
            return Err(NumericsError::InvalidArgument {
                op: "bce_with_logits",
                reason: "targets must lie in [0, 1]".into(),
            });
        }
        let n = targets.len() as f64;
        let loss: f64 = t
            .values()
            .iter()
            .zip(&targets)
            .map(|(&x, &y)| x.max(0.0) - x * y + (-x.abs()).exp().ln_1p())
            .sum::<f64>()
            / n;
        self.push(
            "bce_with_logits",
            Op::BceWithLogits {
                targets: Arc::new(targets),
            },
            vec![logits],
            vec![1, 1],
            vec![loss],
        )
    }

    /// Reverse sweep from a scalar loss node. Visits nodes in reverse
    /// topological order exactly once, accumulating into input gradients.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients, NumericsError> {
        let loss_t = self.value(loss);
        if loss_t.numel() != 1 {
            return Err(NumericsError::InvalidArgument {
                op: "backward",
                reason: format!("loss must be scalar, got shape {:?}", loss_t.shape()),
            });
        }
        let mut grads: Vec<Tensor> = self
            .nodes
            .iter()
            .map(|n| Tensor::zeros(n.value.rows(), n.value.cols()))
            .collect();
        grads[loss.index()].values_mut()[0] = 1.0;

        for i in (0..=loss.index()).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Input) {
                continue;
            }
            let g = std::mem::replace(&mut grads[i], Tensor::zeros(1, 1));
            self.backprop_node(i, &g, &mut grads);
            grads[i] = g;
        }
        if grads.iter().any(|g| !g.all_finite()) {
            return Err(NumericsError::NonFinite { op: "backward" });
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, i: usize, g: &Tensor, grads: &mut [Tensor]) {
        let node = &self.nodes[i];
        let inputs = &node.inputs;
        match &node.op {
            Op::Input => {}
            Op::MatMul => {
                let a = self.value(inputs[0]);
                let b = self.value(inputs[1]);
                let (m, k, n) = (a.rows(), a.cols(), b.cols());
                let da = matmul_nt_raw(g.values(), b.values(), m, n, k);
                let db = matmul_tn_raw(a.values(), g.values(), m, k, n);
                accumulate(grads[inputs[0].index()].values_mut(), &da);
                accumulate(grads[inputs[1].index()].values_mut(), &db);
            }
            Op::MatMulNT => {
                let a = self.value(inputs[0]);
                let b = self.value(inputs[1]);
                let (m, k, n) = (a.rows(), a.cols(), b.rows());
                let da = matmul_raw(g.values(), b.values(), m, n, k);
                let db = matmul_tn_raw(g.values(), a.values(), m, n, k);
                accumulate(grads[inputs[0].index()].values_mut(), &da);
                accumulate(grads[inputs[1].index()].values_mut(), &db);
            }
            Op::Add => {
                accumulate(grads[inputs[0].index()].values_mut(), g.values());
                accumulate(grads[inputs[1].index()].values_mut(), g.values());
            }
            Op::AddRow => {
                accumulate(grads[inputs[0].index()].values_mut(), g.values());
                let c = g.cols();
                let row_grad = grads[inputs[1].index()].values_mut();
                for (idx, gv) in g.values().iter().enumerate() {
                    row_grad[idx % c] += gv;
                }
            }
            Op::Scale(factor) => {
                let scaled: Vec<f64> = g.values().iter().map(|v| v * factor).collect();
                accumulate(grads[inputs[0].index()].values_mut(), &scaled);
            }
            Op::Relu => {
                let x = self.value(inputs[0]);
                let dx: Vec<f64> = g
                    .values()
                    .iter()
                    .zip(x.values())
                    .map(|(gv, &xv)| if xv > 0.0 { *gv } else { 0.0 })
                    .collect();
                accumulate(grads[inputs[0].index()].values_mut(), &dx);
            }
            Op::Ln => {
                let x = self.value(inputs[0]);
                let dx: Vec<f64> = g
                    .values()
                    .iter()
                    .zip(x.values())
                    .map(|(gv, &xv)| gv / xv)
                    .collect();
                accumulate(grads[inputs[0].index()].values_mut(), &dx);
            }
            Op::LayerNorm => {
                let x = self.value(inputs[0]);
                let gain = self.value(inputs[1]);
                let (r, d) = (x.rows(), x.cols());
                let df = d as f64;
                let mut dx = vec![0.0; r * d];
                let mut dgain = vec![0.0; d];
                let mut dbias = vec![0.0; d];
                for row in 0..r {
                    let xs = x.row_slice(row);
                    let gs = &g.values()[row * d..(row + 1) * d];
                    let mean = xs.iter().sum::<f64>() / df;
                    let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / df;
                    let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                    let xhat: Vec<f64> = xs.iter().map(|&v| (v - mean) * inv_std).collect();
                    let dxhat: Vec<f64> = gs
                        .iter()
                        .zip(gain.values())
                        .map(|(gv, gainv)| gv * gainv)
                        .collect();
                    let dxhat_sum: f64 = dxhat.iter().sum();
                    let dxhat_dot: f64 = dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum();
                    for j in 0..d {
                        dgain[j] += gs[j] * xhat[j];
                        dbias[j] += gs[j];
                        dx[row * d + j] =
                            inv_std / df * (df * dxhat[j] - dxhat_sum - xhat[j] * dxhat_dot);
                    }
                }
                accumulate(grads[inputs[0].index()].values_mut(), &dx);
                accumulate(grads[inputs[1].index()].values_mut(), &dgain);
                accumulate(grads[inputs[2].index()].values_mut(), &dbias);
            }
            Op::SoftmaxRows => {
                let y = &node.value;
                let (r, c) = (y.rows(), y.cols());
                let mut dx = vec![0.0; r * c];
                for row in 0..r {
                    let ys = y.row_slice(row);
                    let gs = &g.values()[row * c..(row + 1) * c];
                    let dot: f64 = ys.iter().zip(gs).map(|(a, b)| a * b).sum();
                    for col in 0..c {
                        dx[row * c + col] = ys[col] * (gs[col] - dot);
                    }
                }
                accumulate(grads[inputs[0].index()].values_mut(), &dx);
            }
            Op::MaskedSoftmaxRows(mask) => {
                let y = &node.value;
                let (r, c) = (y.rows(), y.cols());
                let mut dx = vec![0.0; r * c];
                for row in 0..r {
                    let ys = y.row_slice(row);
                    let gs = &g.values()[row * c..(row + 1) * c];
                    let mut dot = 0.0;
                    for col in 0..c {
                        if mask.allows(row, col) {
                            dot += ys[col] * gs[col];
                        }
                    }
                    for col in 0..c {
                        if mask.allows(row, col) {
                            dx[row * c + col] = ys[col] * (gs[col] - dot);
                        }
                    }
                }
                accumulate(grads[inputs[0].index()].values_mut(), &dx);
            }
            Op::SliceCols { start, len } => {
                let (r, _) = (g.rows(), g.cols());
                let src = grads[inputs[0].index()].values_mut();
                let c = self.value(inputs[0]).cols();
                for row in 0..r {
                    for j in 0..*len {
                        src[row * c + start + j] += g.values()[row * len + j];
                    }
                }
            }
            Op::ConcatCols => {
                let r = g.rows();
                let mut offset = 0;
                for &p in inputs {
                    let pc = self.value(p).cols();
                    let dst = grads[p.index()].values_mut();
                    for row in 0..r {
                        for j in 0..pc {
                            dst[row * pc + j] += g.values()[row * g.cols() + offset + j];
                        }
                    }
                    offset += pc;
                }
            }
            Op::ConcatRows => {
                let c = g.cols();
                let mut offset = 0;
                for &p in inputs {
                    let pr = self.value(p).rows();
                    let dst = grads[p.index()].values_mut();
                    dst.iter_mut()
                        .zip(&g.values()[offset * c..(offset + pr) * c])
                        .for_each(|(d, s)| *d += s);
                    offset += pr;
                }
            }
            Op::GatherRows(indices) => {
                let c = g.cols();
                let dst = grads[inputs[0].index()].values_mut();
                for (pos, &i) in indices.iter().enumerate() {
                    for j in 0..c {
                        dst[i * c + j] += g.values()[pos * c + j];
                    }
                }
            }
            Op::SumAll => {
                let gv = g.values()[0];
                for d in grads[inputs[0].index()].values_mut() {
                    *d += gv;
                }
            }
            Op::BceWithLogits { targets } => {
                let x = self.value(inputs[0]);
                let n = targets.len() as f64;
                let gv = g.values()[0];
                let dst = grads[inputs[0].index()].values_mut();
                for (i, (&xv, &tv)) in x.values().iter().zip(targets.iter()).enumerate() {
                    let sig = 1.0 / (1.0 + (-xv).exp());
                    dst[i] += gv * (sig - tv) / n;
                }
            }
        }
    }
}

fn accumulate(dst: &mut [f64], src: &[f64]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn softmax_into(xs: &[f64], out: &mut [f64]) {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut denom = 0.0;
    for (o, &x) in out.iter_mut().zip(xs) {
        let e = (x - max).exp();
        *o = e;
        denom += e;
    }
    for o in out.iter_mut() {
        *o /= denom;
    }
}

/// `C[m x n] = A[m x k] . B[k x n]`, ikj order for locality.
fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let crow = &mut c[i * n..(i + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
    c
}

/// `C[m x n] = A[m x k] . transpose(B[n x k])`.
fn matmul_nt_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            c[i * n + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    c
}

/// `C[k x n] = transpose(A[m x k]) . B[m x n]`.
fn matmul_tn_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; k * n];
    for p in 0..m {
        let arow = &a[p * k..(p + 1) * k];
        let brow = &b[p * n..(p + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let crow = &mut c[i * n..(i + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
    c
}
