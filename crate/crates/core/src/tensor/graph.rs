//! Operation recording and reverse-mode gradient propagation.

use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node inside one [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Hadamard(NodeId, NodeId),
    Scale(NodeId, f64),
    AddRow(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Concat { axis: usize, parts: Vec<NodeId> },
    Slice { input: NodeId, axis: usize, start: usize, len: usize },
    Reshape(NodeId),
    Relu(NodeId),
    LeakyRelu(NodeId, f64),
    Sigmoid(NodeId),
    Softplus(NodeId),
    LogSumExp(NodeId),
    Softmax(NodeId),
    SoftmaxRows(NodeId),
    LayerNorm { input: NodeId, gain: NodeId, bias: NodeId, eps: f64 },
    Gather { input: NodeId, indices: Vec<usize> },
    Sum(NodeId),
    Mean(NodeId),
}

struct Node {
    op: Op,
    value: Tensor,
    needs_grad: bool,
}

/// Records ops eagerly; one graph per forward/backward pass.
///
/// Node iteration order is creation order, so replaying the vector in
/// reverse visits every node after all of its consumers. Repeated runs over
/// identical inputs are bit-identical: there is no hashing or threading in
/// the reduction order.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    /// Smallest |x| seen at a ReLU-family kink; used by the gradient checker
    /// to flag non-comparable points.
    min_kink_dist: f64,
}

/// Per-node gradients produced by [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), min_kink_dist: f64::INFINITY }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Distance from the nearest recorded kink (ReLU-family input magnitude).
    pub fn min_kink_distance(&self) -> f64 {
        self.min_kink_dist
    }

    /// Data leaf; no gradient is tracked through it.
    pub fn input(&mut self, t: Tensor) -> NodeId {
        self.push_unchecked(Op::Leaf, t, false)
    }

    /// Parameter leaf; gradients are tracked.
    pub fn param(&mut self, t: Tensor) -> NodeId {
        self.push_unchecked(Op::Leaf, t, true)
    }

    pub fn constant(&mut self, values: &[f64]) -> Result<NodeId> {
        Ok(self.input(Tensor::vector(values)?))
    }

    fn push_unchecked(&mut self, op: Op, value: Tensor, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { op, value, needs_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn push(&mut self, op_name: &'static str, op: Op, shape: Vec<usize>, values: Vec<f64>) -> Result<NodeId> {
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { op: op_name });
        }
        let needs_grad = self.op_inputs(&op).iter().any(|id| self.nodes[id.0].needs_grad);
        let t = Tensor { shape, values };
        Ok(self.push_unchecked(op, t, needs_grad))
    }

    fn op_inputs(&self, op: &Op) -> Vec<NodeId> {
        match op {
            Op::Leaf => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Hadamard(a, b) | Op::AddRow(a, b) | Op::MatMul(a, b) => {
                vec![*a, *b]
            }
            Op::Scale(a, _)
            | Op::Transpose(a)
            | Op::Reshape(a)
            | Op::Relu(a)
            | Op::LeakyRelu(a, _)
            | Op::Sigmoid(a)
            | Op::Softplus(a)
            | Op::LogSumExp(a)
            | Op::Softmax(a)
            | Op::SoftmaxRows(a)
            | Op::Sum(a)
            | Op::Mean(a) => vec![*a],
            Op::Concat { parts, .. } => parts.clone(),
            Op::Slice { input, .. } | Op::Gather { input, .. } => vec![*input],
            Op::LayerNorm { input, gain, bias, .. } => vec![*input, *gain, *bias],
        }
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::Shape {
                op,
                detail: format!("{:?} vs {:?}", self.value(a).shape(), self.value(b).shape()),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("add", a, b)?;
        let shape = self.value(a).shape().to_vec();
        let values = self
            .value(a)
            .values()
            .iter()
            .zip(self.value(b).values())
            .map(|(x, y)| x + y)
            .collect();
        self.push("add", Op::Add(a, b), shape, values)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("sub", a, b)?;
        let shape = self.value(a).shape().to_vec();
        let values = self
            .value(a)
            .values()
            .iter()
            .zip(self.value(b).values())
            .map(|(x, y)| x - y)
            .collect();
        self.push("sub", Op::Sub(a, b), shape, values)
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("hadamard", a, b)?;
        let shape = self.value(a).shape().to_vec();
        let values = self
            .value(a)
            .values()
            .iter()
            .zip(self.value(b).values())
            .map(|(x, y)| x * y)
            .collect();
        self.push("hadamard", Op::Hadamard(a, b), shape, values)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        let shape = self.value(a).shape().to_vec();
        let values = self.value(a).values().iter().map(|x| x * c).collect();
        self.push("scale", Op::Scale(a, c), shape, values)
    }

    /// `[m, n]` matrix plus a length-`n` row vector broadcast over rows.
    pub fn add_row(&mut self, mat: NodeId, row: NodeId) -> Result<NodeId> {
        let (m, n) = match self.value(mat).shape() {
            [m, n] => (*m, *n),
            s => {
                return Err(Error::Shape { op: "add_row", detail: format!("matrix expected, got {:?}", s) })
            }
        };
        if self.value(row).shape() != [n] {
            return Err(Error::Shape {
                op: "add_row",
                detail: format!("row {:?} vs cols {}", self.value(row).shape(), n),
            });
        }
        let mut values = self.value(mat).values().to_vec();
        let r = self.value(row).values();
        for i in 0..m {
            for j in 0..n {
                values[i * n + j] += r[j];
            }
        }
        self.push("add_row", Op::AddRow(mat, row), vec![m, n], values)
    }

    /// Matrix product. Rank-1 operands are treated as a row (lhs) or a
    /// column (rhs); two rank-1 operands produce a scalar dot product.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ar, ac) = self.value(a).as_2d();
        let bt = self.value(b);
        let (br, bc) = match bt.shape() {
            [n] => (*n, 1),
            [r, c] => (*r, *c),
            s => return Err(Error::Shape { op: "matmul", detail: format!("rank > 2: {:?}", s) }),
        };
        if ac != br {
            return Err(Error::Shape { op: "matmul", detail: format!("inner dims {} vs {}", ac, br) });
        }
        let av = self.value(a).values();
        let bv = self.value(b).values();
        let mut out = vec![0.0; ar * bc];
        for i in 0..ar {
            for k in 0..ac {
                let aik = av[i * ac + k];
                if aik == 0.0 {
                    continue;
                }
                let brow = &bv[k * bc..(k + 1) * bc];
                let orow = &mut out[i * bc..(i + 1) * bc];
                for j in 0..bc {
                    orow[j] += aik * brow[j];
                }
            }
        }
        let a_rank1 = self.value(a).rank() == 1;
        let b_rank1 = self.value(b).rank() == 1;
        let shape = match (a_rank1, b_rank1) {
            (true, true) => vec![1],
            (true, false) => vec![bc],
            (false, true) => vec![ar],
            (false, false) => vec![ar, bc],
        };
        self.push("matmul", Op::MatMul(a, b), shape, out)
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let (r, c) = match self.value(a).shape() {
            [r, c] => (*r, *c),
            s => {
                return Err(Error::Shape { op: "transpose", detail: format!("matrix expected, got {:?}", s) })
            }
        };
        let v = self.value(a).values();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = v[i * c + j];
            }
        }
        self.push("transpose", Op::Transpose(a), vec![c, r], out)
    }

    /// Concatenation along `axis`. Rank-1 parts concatenate along axis 0;
    /// rank-2 parts along rows (0) or columns (1).
    pub fn concat(&mut self, axis: usize, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Shape { op: "concat", detail: "no parts".into() });
        }
        let rank = self.value(parts[0]).rank();
        if parts.iter().any(|p| self.value(*p).rank() != rank) {
            return Err(Error::Shape { op: "concat", detail: "mixed ranks".into() });
        }
        let (shape, values) = match (rank, axis) {
            (1, 0) => {
                let mut values = Vec::new();
                for p in parts {
                    values.extend_from_slice(self.value(*p).values());
                }
                (vec![values.len()], values)
            }
            (2, 0) => {
                let cols = self.value(parts[0]).shape()[1];
                let mut rows = 0;
                let mut values = Vec::new();
                for p in parts {
                    let s = self.value(*p).shape();
                    if s[1] != cols {
                        return Err(Error::Shape { op: "concat", detail: format!("cols {} vs {}", s[1], cols) });
                    }
                    rows += s[0];
                    values.extend_from_slice(self.value(*p).values());
                }
                (vec![rows, cols], values)
            }
            (2, 1) => {
                let rows = self.value(parts[0]).shape()[0];
                let widths: Vec<usize> = parts.iter().map(|p| self.value(*p).shape()[1]).collect();
                if parts.iter().any(|p| self.value(*p).shape()[0] != rows) {
                    return Err(Error::Shape { op: "concat", detail: "row mismatch".into() });
                }
                let total: usize = widths.iter().sum();
                let mut values = vec![0.0; rows * total];
                let mut off = 0;
                for (p, w) in parts.iter().zip(&widths) {
                    let v = self.value(*p).values();
                    for i in 0..rows {
                        values[i * total + off..i * total + off + w].copy_from_slice(&v[i * w..(i + 1) * w]);
                    }
                    off += w;
                }
                (vec![rows, total], values)
            }
            _ => {
                return Err(Error::Shape { op: "concat", detail: format!("rank {} axis {}", rank, axis) })
            }
        };
        self.push("concat", Op::Concat { axis, parts: parts.to_vec() }, shape, values)
    }

    /// Contiguous slice of `len` indices starting at `start` along `axis`.
    pub fn slice(&mut self, input: NodeId, axis: usize, start: usize, len: usize) -> Result<NodeId> {
        let t = self.value(input);
        let (shape, values) = match (t.shape(), axis) {
            ([n], 0) => {
                if start + len > *n {
                    return Err(Error::Shape { op: "slice", detail: format!("{}+{} > {}", start, len, n) });
                }
                (vec![len], t.values()[start..start + len].to_vec())
            }
            ([r, c], 0) => {
                if start + len > *r {
                    return Err(Error::Shape { op: "slice", detail: format!("{}+{} > {} rows", start, len, r) });
                }
                (vec![len, *c], t.values()[start * c..(start + len) * c].to_vec())
            }
            ([r, c], 1) => {
                if start + len > *c {
                    return Err(Error::Shape { op: "slice", detail: format!("{}+{} > {} cols", start, len, c) });
                }
                let mut values = Vec::with_capacity(r * len);
                for i in 0..*r {
                    values.extend_from_slice(&t.values()[i * c + start..i * c + start + len]);
                }
                (vec![*r, len], values)
            }
            (s, _) => {
                return Err(Error::Shape { op: "slice", detail: format!("shape {:?} axis {}", s, axis) })
            }
        };
        self.push("slice", Op::Slice { input, axis, start, len }, shape, values)
    }

    /// Shape change preserving element order and count.
    pub fn reshape(&mut self, input: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let n: usize = shape.iter().product();
        if n != self.value(input).len() {
            return Err(Error::Shape {
                op: "reshape",
                detail: format!("{:?} to {:?}", self.value(input).shape(), shape),
            });
        }
        let values = self.value(input).values().to_vec();
        self.push("reshape", Op::Reshape(input), shape, values)
    }

    /// Row `i` of a matrix as a rank-1 vector.
    pub fn row(&mut self, input: NodeId, i: usize) -> Result<NodeId> {
        let cols = match self.value(input).shape() {
            [_, c] => *c,
            s => return Err(Error::Shape { op: "row", detail: format!("matrix expected, got {:?}", s) }),
        };
        let r = self.slice(input, 0, i, 1)?;
        self.reshape(r, vec![cols])
    }

    fn track_kink(&mut self, values: &[f64]) {
        for v in values {
            let d = v.abs();
            if d < self.min_kink_dist {
                self.min_kink_dist = d;
            }
        }
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        let shape = self.value(a).shape().to_vec();
        let values: Vec<f64> = self.value(a).values().iter().map(|x| x.max(0.0)).collect();
        let inputs = self.value(a).values().to_vec();
        self.track_kink(&inputs);
        self.push("relu", Op::Relu(a), shape, values)
    }

    pub fn leaky_relu(&mut self, a: NodeId, slope: f64) -> Result<NodeId> {
        let shape = self.value(a).shape().to_vec();
        let values: Vec<f64> = self
            .value(a)
            .values()
            .iter()
            .map(|x| if *x > 0.0 { *x } else { slope * x })
            .collect();
        let inputs = self.value(a).values().to_vec();
        self.track_kink(&inputs);
        self.push("leaky_relu", Op::LeakyRelu(a, slope), shape, values)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        let shape = self.value(a).shape().to_vec();
        let values = self.value(a).values().iter().map(|x| sigmoid(*x)).collect();
        self.push("sigmoid", Op::Sigmoid(a), shape, values)
    }

    /// `ln(1 + e^x)`, evaluated stably for large |x|.
    pub fn softplus(&mut self, a: NodeId) -> Result<NodeId> {
        let shape = self.value(a).shape().to_vec();
        let values = self.value(a).values().iter().map(|x| softplus(*x)).collect();
        self.push("softplus", Op::Softplus(a), shape, values)
    }

    /// log-sum-exp over all elements, computed with max subtraction.
    pub fn log_sum_exp(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).values();
        if v.is_empty() {
            return Err(Error::Shape { op: "log_sum_exp", detail: "empty input".into() });
        }
        let value = log_sum_exp(v);
        self.push("log_sum_exp", Op::LogSumExp(a), vec![1], vec![value])
    }

    /// Softmax over a rank-1 vector.
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        if self.value(a).rank() != 1 {
            return Err(Error::Shape {
                op: "softmax",
                detail: format!("vector expected, got {:?}", self.value(a).shape()),
            });
        }
        let values = softmax(self.value(a).values());
        let shape = self.value(a).shape().to_vec();
        self.push("softmax", Op::Softmax(a), shape, values)
    }

    /// Row-wise softmax over a rank-2 matrix.
    pub fn softmax_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let (r, c) = match self.value(a).shape() {
            [r, c] => (*r, *c),
            s => {
                return Err(Error::Shape { op: "softmax_rows", detail: format!("matrix expected, got {:?}", s) })
            }
        };
        let v = self.value(a).values();
        let mut values = Vec::with_capacity(r * c);
        for i in 0..r {
            values.extend(softmax(&v[i * c..(i + 1) * c]));
        }
        self.push("softmax_rows", Op::SoftmaxRows(a), vec![r, c], values)
    }

    /// Layer normalization over the last axis with learnable gain and bias.
    pub fn layer_norm(&mut self, input: NodeId, gain: NodeId, bias: NodeId, eps: f64) -> Result<NodeId> {
        let (rows, cols) = self.value(input).as_2d();
        if self.value(gain).shape() != [cols] || self.value(bias).shape() != [cols] {
            return Err(Error::Shape {
                op: "layer_norm",
                detail: format!(
                    "gain {:?} bias {:?} vs width {}",
                    self.value(gain).shape(),
                    self.value(bias).shape(),
                    cols
                ),
            });
        }
        let x = self.value(input).values();
        let g = self.value(gain).values();
        let b = self.value(bias).values();
        let mut values = vec![0.0; rows * cols];
        for i in 0..rows {
            let row = &x[i * cols..(i + 1) * cols];
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let inv = 1.0 / (var + eps).sqrt();
            for j in 0..cols {
                values[i * cols + j] = (row[j] - mean) * inv * g[j] + b[j];
            }
        }
        let shape = self.value(input).shape().to_vec();
        self.push("layer_norm", Op::LayerNorm { input, gain, bias, eps }, shape, values)
    }

    /// Select elements of a rank-1 vector by index; gradient scatter-adds.
    pub fn gather(&mut self, input: NodeId, indices: &[usize]) -> Result<NodeId> {
        if self.value(input).rank() != 1 {
            return Err(Error::Shape {
                op: "gather",
                detail: format!("vector expected, got {:?}", self.value(input).shape()),
            });
        }
        let v = self.value(input).values();
        let mut values = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= v.len() {
                return Err(Error::Shape { op: "gather", detail: format!("index {} out of {}", i, v.len()) });
            }
            values.push(v[i]);
        }
        self.push(
            "gather",
            Op::Gather { input, indices: indices.to_vec() },
            vec![indices.len()],
            values,
        )
    }

    /// Single element as a scalar node.
    pub fn index(&mut self, input: NodeId, i: usize) -> Result<NodeId> {
        self.gather(input, &[i])
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let value = self.value(a).values().iter().sum();
        self.push("sum", Op::Sum(a), vec![1], vec![value])
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        let n = self.value(a).len();
        if n == 0 {
            return Err(Error::Shape { op: "mean", detail: "empty input".into() });
        }
        let value = self.value(a).values().iter().sum::<f64>() / n as f64;
        self.push("mean", Op::Mean(a), vec![1], vec![value])
    }

    /// `softmax(Q Kᵀ / sqrt(d_k)) V` for rank-2 `q`, `k`, `v`.
    pub fn scaled_dot_attention(&mut self, q: NodeId, k: NodeId, v: NodeId) -> Result<NodeId> {
        let dk = match self.value(k).shape() {
            [_, d] => *d,
            s => {
                return Err(Error::Shape {
                    op: "scaled_dot_attention",
                    detail: format!("matrix expected, got {:?}", s),
                })
            }
        };
        let kt = self.transpose(k)?;
        let scores = self.matmul(q, kt)?;
        let scaled = self.scale(scores, 1.0 / (dk as f64).sqrt())?;
        let attn = self.softmax_rows(scaled)?;
        self.matmul(attn, v)
    }

    /// Reverse pass from a scalar loss; visits each node exactly once and
    /// accumulates gradients additively.
    pub fn backward(&mut self, loss: NodeId) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Shape {
                op: "backward",
                detail: format!("loss must be scalar, got {:?}", self.value(loss).shape()),
            });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor { shape: self.value(loss).shape().to_vec(), values: vec![1.0] });

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].clone() else { continue };
            if !self.nodes[id].needs_grad {
                continue;
            }
            let op = self.nodes[id].op.clone();
            match op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    self.accumulate(&mut grads, a, g.values().to_vec());
                    self.accumulate(&mut grads, b, g.values().to_vec());
                }
                Op::Sub(a, b) => {
                    self.accumulate(&mut grads, a, g.values().to_vec());
                    self.accumulate(&mut grads, b, g.values().iter().map(|v| -v).collect());
                }
                Op::Hadamard(a, b) => {
                    let ga: Vec<f64> =
                        g.values().iter().zip(self.value(b).values()).map(|(g, y)| g * y).collect();
                    let gb: Vec<f64> =
                        g.values().iter().zip(self.value(a).values()).map(|(g, x)| g * x).collect();
                    self.accumulate(&mut grads, a, ga);
                    self.accumulate(&mut grads, b, gb);
                }
                Op::Scale(a, c) => {
                    self.accumulate(&mut grads, a, g.values().iter().map(|v| v * c).collect());
                }
                Op::AddRow(mat, row) => {
                    let (m, n) = self.value(mat).as_2d();
                    self.accumulate(&mut grads, mat, g.values().to_vec());
                    let mut gr = vec![0.0; n];
                    for i in 0..m {
                        for j in 0..n {
                            gr[j] += g.values()[i * n + j];
                        }
                    }
                    self.accumulate(&mut grads, row, gr);
                }
                Op::MatMul(a, b) => {
                    let (ar, ac) = self.value(a).as_2d();
                    let bc = self.value(b).len() / ac;
                    let gv = g.values();
                    if self.nodes[a.0].needs_grad {
                        // gA = gC Bᵀ
                        let bv = self.value(b).values();
                        let mut ga = vec![0.0; ar * ac];
                        for i in 0..ar {
                            for j in 0..bc {
                                let gij = gv[i * bc + j];
                                if gij == 0.0 {
                                    continue;
                                }
                                for k in 0..ac {
                                    ga[i * ac + k] += gij * bv[k * bc + j];
                                }
                            }
                        }
                        self.accumulate(&mut grads, a, ga);
                    }
                    if self.nodes[b.0].needs_grad {
                        // gB = Aᵀ gC
                        let av = self.value(a).values();
                        let mut gb = vec![0.0; ac * bc];
                        for i in 0..ar {
                            for k in 0..ac {
                                let aik = av[i * ac + k];
                                if aik == 0.0 {
                                    continue;
                                }
                                for j in 0..bc {
                                    gb[k * bc + j] += aik * gv[i * bc + j];
                                }
                            }
                        }
                        self.accumulate(&mut grads, b, gb);
                    }
                }
                Op::Transpose(a) => {
                    let (r, c) = self.value(a).as_2d();
                    let gv = g.values();
                    let mut ga = vec![0.0; r * c];
                    for i in 0..c {
                        for j in 0..r {
                            ga[j * c + i] = gv[i * r + j];
                        }
                    }
                    self.accumulate(&mut grads, a, ga);
                }
                Op::Concat { axis, parts } => {
                    let rank = self.value(parts[0]).rank();
                    match (rank, axis) {
                        (1, 0) | (2, 0) => {
                            let mut off = 0;
                            for p in parts {
                                let n = self.value(p).len();
                                let gp = g.values()[off..off + n].to_vec();
                                off += n;
                                self.accumulate(&mut grads, p, gp);
                            }
                        }
                        (2, 1) => {
                            let rows = self.value(parts[0]).shape()[0];
                            let total: usize = parts.iter().map(|p| self.value(*p).shape()[1]).sum();
                            let mut off = 0;
                            for p in parts {
                                let w = self.value(p).shape()[1];
                                let mut gp = vec![0.0; rows * w];
                                for i in 0..rows {
                                    gp[i * w..(i + 1) * w]
                                        .copy_from_slice(&g.values()[i * total + off..i * total + off + w]);
                                }
                                off += w;
                                self.accumulate(&mut grads, p, gp);
                            }
                        }
                        _ => unreachable!("validated at construction"),
                    }
                }
                Op::Slice { input, axis, start, len } => {
                    let t_shape = self.value(input).shape().to_vec();
                    let mut gi = vec![0.0; self.value(input).len()];
                    match (t_shape.as_slice(), axis) {
                        ([_], 0) => {
                            gi[start..start + len].copy_from_slice(g.values());
                        }
                        ([_, c], 0) => {
                            gi[start * c..(start + len) * c].copy_from_slice(g.values());
                        }
                        ([_, c], 1) => {
                            let rows = t_shape[0];
                            for i in 0..rows {
                                for j in 0..len {
                                    gi[i * c + start + j] = g.values()[i * len + j];
                                }
                            }
                        }
                        _ => unreachable!("validated at construction"),
                    }
                    self.accumulate(&mut grads, input, gi);
                }
                Op::Reshape(a) => {
                    self.accumulate(&mut grads, a, g.values().to_vec());
                }
                Op::Relu(a) => {
                    let ga = self
                        .value(a)
                        .values()
                        .iter()
                        .zip(g.values())
                        .map(|(x, g)| if *x > 0.0 { *g } else { 0.0 })
                        .collect();
                    self.accumulate(&mut grads, a, ga);
                }
                Op::LeakyRelu(a, slope) => {
                    let ga = self
                        .value(a)
                        .values()
                        .iter()
                        .zip(g.values())
                        .map(|(x, g)| if *x > 0.0 { *g } else { slope * g })
                        .collect();
                    self.accumulate(&mut grads, a, ga);
                }
                Op::Sigmoid(a) => {
                    let ga = self
                        .value(NodeId(id))
                        .values()
                        .iter()
                        .zip(g.values())
                        .map(|(y, g)| g * y * (1.0 - y))
                        .collect();
                    self.accumulate(&mut grads, a, ga);
                }
                Op::Softplus(a) => {
                    let ga = self
                        .value(a)
                        .values()
                        .iter()
                        .zip(g.values())
                        .map(|(x, g)| g * sigmoid(*x))
                        .collect();
                    self.accumulate(&mut grads, a, ga);
                }
                Op::LogSumExp(a) => {
                    let gs = g.values()[0];
                    let ga = softmax(self.value(a).values()).into_iter().map(|p| gs * p).collect();
                    self.accumulate(&mut grads, a, ga);
                }
                Op::Softmax(a) => {
                    let y = self.value(NodeId(id)).values();
                    let dot: f64 = y.iter().zip(g.values()).map(|(y, g)| y * g).sum();
                    let ga = y.iter().zip(g.values()).map(|(y, g)| y * (g - dot)).collect();
                    self.accumulate(&mut grads, a, ga);
                }
                Op::SoftmaxRows(a) => {
                    let (r, c) = self.value(a).as_2d();
                    let y = self.value(NodeId(id)).values();
                    let gv = g.values();
                    let mut ga = vec![0.0; r * c];
                    for i in 0..r {
                        let yr = &y[i * c..(i + 1) * c];
                        let gr = &gv[i * c..(i + 1) * c];
                        let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                        for j in 0..c {
                            ga[i * c + j] = yr[j] * (gr[j] - dot);
                        }
                    }
                    self.accumulate(&mut grads, a, ga);
                }
                Op::LayerNorm { input, gain, bias, eps } => {
                    let (rows, cols) = self.value(input).as_2d();
                    let x = self.value(input).values();
                    let gn = self.value(gain).values();
                    let gv = g.values();
                    let mut gx = vec![0.0; rows * cols];
                    let mut gg = vec![0.0; cols];
                    let mut gb = vec![0.0; cols];
                    for i in 0..rows {
                        let row = &x[i * cols..(i + 1) * cols];
                        let mean = row.iter().sum::<f64>() / cols as f64;
                        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
                        let inv = 1.0 / (var + eps).sqrt();
                        let xhat: Vec<f64> = row.iter().map(|v| (v - mean) * inv).collect();
                        let grow = &gv[i * cols..(i + 1) * cols];
                        let ghat: Vec<f64> = grow.iter().zip(gn).map(|(g, gamma)| g * gamma).collect();
                        let mean_ghat = ghat.iter().sum::<f64>() / cols as f64;
                        let mean_gx: f64 =
                            ghat.iter().zip(&xhat).map(|(g, h)| g * h).sum::<f64>() / cols as f64;
                        for j in 0..cols {
                            gx[i * cols + j] = inv * (ghat[j] - mean_ghat - xhat[j] * mean_gx);
                            gg[j] += grow[j] * xhat[j];
                            gb[j] += grow[j];
                        }
                    }
                    self.accumulate(&mut grads, input, gx);
                    self.accumulate(&mut grads, gain, gg);
                    self.accumulate(&mut grads, bias, gb);
                }
                Op::Gather { input, indices } => {
                    let mut gi = vec![0.0; self.value(input).len()];
                    for (slot, &i) in indices.iter().enumerate() {
                        gi[i] += g.values()[slot];
                    }
                    self.accumulate(&mut grads, input, gi);
                }
                Op::Sum(a) => {
                    let gs = g.values()[0];
                    self.accumulate(&mut grads, a, vec![gs; self.value(a).len()]);
                }
                Op::Mean(a) => {
                    let n = self.value(a).len() as f64;
                    let gs = g.values()[0] / n;
                    self.accumulate(&mut grads, a, vec![gs; self.value(a).len()]);
                }
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], id: NodeId, delta: Vec<f64>) {
        if !self.nodes[id.0].needs_grad {
            return;
        }
        match &mut grads[id.0] {
            Some(t) => {
                for (a, d) in t.values_mut().iter_mut().zip(delta) {
                    *a += d;
                }
            }
            slot @ None => {
                *slot = Some(Tensor { shape: self.value(id).shape().to_vec(), values: delta });
            }
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Max-subtracted log-sum-exp; exact for constant vectors.
pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub(crate) fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64]) -> Tensor {
        Tensor::vector(v).unwrap()
    }

    #[test]
    fn relu_and_sigmoid_definitions() {
        let mut g = Graph::new();
        let x = g.input(t(&[-1.0, 2.0]));
        let y = g.relu(x).unwrap();
        assert_eq!(g.value(y).values(), &[0.0, 2.0]);

        let z = g.input(t(&[0.0]));
        let s = g.sigmoid(z).unwrap();
        assert_eq!(g.value(s).values(), &[0.5]);
    }

    #[test]
    fn log_sum_exp_max_subtraction() {
        let mut g = Graph::new();
        let x = g.input(t(&[1000.0, 1000.0]));
        let l = g.log_sum_exp(x).unwrap();
        let expect = 1000.0 + 2.0_f64.ln();
        assert!((g.value(l).item() - expect).abs() < 1e-12);
    }

    #[test]
    fn log_sum_exp_shift_equivariance() {
        let v = [0.3, -1.2, 4.0, 2.2];
        let shifted: Vec<f64> = v.iter().map(|x| x + 7.5).collect();
        assert!((log_sum_exp(&shifted) - (log_sum_exp(&v) + 7.5)).abs() < 1e-12);
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[3.0, -2.0, 0.5, 11.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn square_gradient() {
        // d/dx (x*x) at 3 is 6.
        let mut g = Graph::new();
        let x = g.param(t(&[3.0]));
        let y = g.hadamard(x, x).unwrap();
        let loss = g.sum(y).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().values(), &[6.0]);
    }

    #[test]
    fn constant_has_no_gradient() {
        let mut g = Graph::new();
        let x = g.param(t(&[2.0]));
        let c = g.input(t(&[5.0]));
        let y = g.hadamard(x, c).unwrap();
        let loss = g.sum(y).unwrap();
        let grads = g.backward(loss).unwrap();
        assert!(grads.get(c).is_none());
        assert_eq!(grads.get(x).unwrap().values(), &[5.0]);
    }

    #[test]
    fn shared_subexpression_matches_naive_recomputation() {
        // loss = (x+y)·x + (x+y)·y reuses s = x+y; gradient must equal the
        // sum of path contributions: d/dx = 2x + 2y.
        let (xv, yv) = (1.5, -0.7);
        let mut g = Graph::new();
        let x = g.param(t(&[xv]));
        let y = g.param(t(&[yv]));
        let s = g.add(x, y).unwrap();
        let a = g.hadamard(s, x).unwrap();
        let b = g.hadamard(s, y).unwrap();
        let sum = g.add(a, b).unwrap();
        let loss = g.sum(sum).unwrap();
        let grads = g.backward(loss).unwrap();
        let gx = grads.get(x).unwrap().item();
        let gy = grads.get(y).unwrap().item();
        assert!((gx - (2.0 * xv + yv + yv)).abs() < 1e-12);
        assert!((gy - (xv + xv + 2.0 * yv)).abs() < 1e-12);
    }

    #[test]
    fn matmul_shapes() {
        let mut g = Graph::new();
        let a = g.input(Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let v = g.input(t(&[1.0, 0.0, -1.0]));
        let mv = g.matmul(a, v).unwrap();
        assert_eq!(g.value(mv).shape(), &[2]);
        assert_eq!(g.value(mv).values(), &[-2.0, -2.0]);

        let dot = g.matmul(v, v).unwrap();
        assert_eq!(g.value(dot).shape(), &[1]);
        assert_eq!(g.value(dot).item(), 2.0);
    }

    #[test]
    fn non_finite_is_rejected() {
        let mut g = Graph::new();
        let x = g.input(t(&[800.0]));
        let e = g.log_sum_exp(x).unwrap();
        // exp(800) overflows without max subtraction; with it this is fine.
        assert!(g.value(e).item().is_finite());
        // A genuinely divergent op errors instead of storing Inf.
        let big = g.input(t(&[1e308]));
        assert!(g.hadamard(big, big).is_err());
    }

    #[test]
    fn backward_requires_scalar_loss() {
        let mut g = Graph::new();
        let x = g.param(t(&[1.0, 2.0]));
        assert!(g.backward(x).is_err());
    }

    #[test]
    fn scalar_loss_on_dag_is_deterministic() {
        let run = || {
            let mut g = Graph::new();
            let x = g.param(t(&[0.3, -0.4, 0.9]));
            let w = g.param(Tensor::matrix(3, 3, vec![0.1; 9]).unwrap());
            let h = g.matmul(x, w).unwrap();
            let a = g.leaky_relu(h, 0.2).unwrap();
            let l = g.log_sum_exp(a).unwrap();
            let grads = g.backward(l).unwrap();
            (g.value(l).item(), grads.get(w).unwrap().values().to_vec())
        };
        let (l1, g1) = run();
        let (l2, g2) = run();
        assert_eq!(l1.to_bits(), l2.to_bits());
        assert_eq!(g1, g2);
    }
}
