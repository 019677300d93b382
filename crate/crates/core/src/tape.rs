//! Append-only tape recording tensor computations for reverse-mode
//! differentiation.
//!
//! Values are computed eagerly when an operation is recorded. The backward
//! pass does not evaluate closed-form derivatives; it *records* the adjoint
//! computation as further tape operations. Gradients are therefore
//! themselves differentiable, which is how the gradient-penalty term obtains
//! its exact parameter gradient: one backward pass builds the input-gradient
//! nodes, the penalty is assembled from them, and a second backward pass
//! differentiates the whole structure.
//!
//! Tapes are single-use and confined to one thread; distinct tapes on
//! distinct threads share nothing.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    /// Differentiable input.
    Leaf,
    /// Non-differentiable input; adjoints are not tracked into it.
    Constant,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    /// Elementwise product.
    Mul(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    /// Matrix plus broadcast row vector.
    AddRow(NodeId, NodeId),
    /// Reduce over rows: `m x n -> 1 x n`.
    SumRows(NodeId),
    /// Reduce over columns: `m x n -> m x 1`.
    SumCols(NodeId),
    /// Reduce to scalar.
    SumAll(NodeId),
    /// Tile `1 x n` to `m x n`.
    BroadcastRows(NodeId, usize),
    /// Tile `m x 1` to `m x n`.
    BroadcastCols(NodeId, usize),
    /// Tile `1 x 1` to `m x n`.
    BroadcastScalar(NodeId, usize, usize),
    /// `a*x + b` elementwise.
    Affine(NodeId, f64, f64),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Softplus(NodeId),
    Sqrt(NodeId),
    Recip(NodeId),
    ConcatCols(NodeId, NodeId),
    SliceCols(NodeId, usize, usize),
}

struct Node {
    op: Op,
    value: Tensor,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Map from node to its adjoint node, produced by one backward pass.
pub struct Adjoints {
    adj: Vec<Option<NodeId>>,
}

impl Adjoints {
    /// Adjoint node of `id`, if any gradient flowed to it.
    pub fn node(&self, id: NodeId) -> Option<NodeId> {
        self.adj.get(id.index()).copied().flatten()
    }

    /// Adjoint value of `id`; zeros of the node's shape if no gradient
    /// flowed.
    pub fn tensor(&self, tape: &Tape, id: NodeId) -> Tensor {
        match self.node(id) {
            Some(a) => tape.value(a).clone(),
            None => {
                let shape = tape.value(id).shape();
                Tensor::zeros(shape[0], shape[1])
            }
        }
    }
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn stable_softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
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

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    // ── inputs ───────────────────────────────────────────────────────

    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, value)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Constant, value)
    }

    // ── recorded operations ──────────────────────────────────────────

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).add(self.value(b));
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).sub(self.value(b));
        self.push(Op::Sub(a, b), v)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).mul(self.value(b));
        self.push(Op::Mul(a, b), v)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul(self.value(b));
        self.push(Op::MatMul(a, b), v)
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).transpose();
        self.push(Op::Transpose(a), v)
    }

    pub fn add_row(&mut self, mat: NodeId, row: NodeId) -> NodeId {
        let v = self.value(mat).add_row(self.value(row));
        self.push(Op::AddRow(mat, row), v)
    }

    pub fn sum_rows(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).sum_rows();
        self.push(Op::SumRows(a), v)
    }

    pub fn sum_cols(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).sum_cols();
        self.push(Op::SumCols(a), v)
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).sum_all();
        self.push(Op::SumAll(a), v)
    }

    pub fn broadcast_rows(&mut self, a: NodeId, m: usize) -> NodeId {
        let v = self.value(a).broadcast_rows(m);
        self.push(Op::BroadcastRows(a, m), v)
    }

    pub fn broadcast_cols(&mut self, a: NodeId, n: usize) -> NodeId {
        let v = self.value(a).broadcast_cols(n);
        self.push(Op::BroadcastCols(a, n), v)
    }

    pub fn broadcast_scalar(&mut self, a: NodeId, m: usize, n: usize) -> NodeId {
        let v = self.value(a).broadcast_scalar(m, n);
        self.push(Op::BroadcastScalar(a, m, n), v)
    }

    pub fn affine(&mut self, a: NodeId, scale: f64, shift: f64) -> NodeId {
        let v = self.value(a).affine(scale, shift);
        self.push(Op::Affine(a, scale, shift), v)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::tanh);
        self.push(Op::Tanh(a), v)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(stable_sigmoid);
        self.push(Op::Sigmoid(a), v)
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(stable_softplus);
        self.push(Op::Softplus(a), v)
    }

    pub fn sqrt(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::sqrt);
        self.push(Op::Sqrt(a), v)
    }

    pub fn recip(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::recip);
        self.push(Op::Recip(a), v)
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).concat_cols(self.value(b));
        self.push(Op::ConcatCols(a, b), v)
    }

    pub fn slice_cols(&mut self, a: NodeId, lo: usize, hi: usize) -> NodeId {
        let v = self.value(a).slice_cols(lo, hi);
        self.push(Op::SliceCols(a, lo, hi), v)
    }

    /// Scalar mean of all entries.
    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let n = self.value(a).len() as f64;
        let s = self.sum_all(a);
        self.affine(s, 1.0 / n, 0.0)
    }

    // ── backward ─────────────────────────────────────────────────────

    /// Record the adjoint computation for `root` on this tape and return
    /// the adjoint node of every node that receives gradient.
    ///
    /// With `seed = None` the root must be a scalar and is seeded with 1;
    /// otherwise the seed tensor (the vector in a vector-Jacobian product)
    /// must match the root's shape.
    pub fn backward(&mut self, root: NodeId, seed: Option<Tensor>) -> Result<Adjoints> {
        let seed = match seed {
            Some(s) => {
                self.value(root).check_same_shape(&s, "backward seed")?;
                s
            }
            None => {
                if !self.value(root).is_scalar() {
                    return Err(Error::NonScalarRoot(self.value(root).shape().to_vec()));
                }
                Tensor::scalar(1.0)
            }
        };
        let mut adj: Vec<Option<NodeId>> = vec![None; root.index() + 1];
        adj[root.index()] = Some(self.constant(seed));

        for i in (0..=root.index()).rev() {
            let Some(a) = adj[i] else { continue };
            let op = self.nodes[i].op.clone();
            match op {
                Op::Leaf | Op::Constant => {}
                Op::Add(x, y) => {
                    self.accumulate(&mut adj, x, a);
                    self.accumulate(&mut adj, y, a);
                }
                Op::Sub(x, y) => {
                    self.accumulate(&mut adj, x, a);
                    let neg = self.affine(a, -1.0, 0.0);
                    self.accumulate(&mut adj, y, neg);
                }
                Op::Mul(x, y) => {
                    let gx = self.mul(a, y);
                    self.accumulate(&mut adj, x, gx);
                    let gy = self.mul(a, x);
                    self.accumulate(&mut adj, y, gy);
                }
                Op::MatMul(x, y) => {
                    let yt = self.transpose(y);
                    let gx = self.matmul(a, yt);
                    self.accumulate(&mut adj, x, gx);
                    let xt = self.transpose(x);
                    let gy = self.matmul(xt, a);
                    self.accumulate(&mut adj, y, gy);
                }
                Op::Transpose(x) => {
                    let g = self.transpose(a);
                    self.accumulate(&mut adj, x, g);
                }
                Op::AddRow(x, r) => {
                    self.accumulate(&mut adj, x, a);
                    let gr = self.sum_rows(a);
                    self.accumulate(&mut adj, r, gr);
                }
                Op::SumRows(x) => {
                    let m = self.value(x).rows();
                    let g = self.broadcast_rows(a, m);
                    self.accumulate(&mut adj, x, g);
                }
                Op::SumCols(x) => {
                    let n = self.value(x).cols();
                    let g = self.broadcast_cols(a, n);
                    self.accumulate(&mut adj, x, g);
                }
                Op::SumAll(x) => {
                    let (m, n) = (self.value(x).rows(), self.value(x).cols());
                    let g = self.broadcast_scalar(a, m, n);
                    self.accumulate(&mut adj, x, g);
                }
                Op::BroadcastRows(x, _) => {
                    let g = self.sum_rows(a);
                    self.accumulate(&mut adj, x, g);
                }
                Op::BroadcastCols(x, _) => {
                    let g = self.sum_cols(a);
                    self.accumulate(&mut adj, x, g);
                }
                Op::BroadcastScalar(x, _, _) => {
                    let g = self.sum_all(a);
                    self.accumulate(&mut adj, x, g);
                }
                Op::Affine(x, scale, _) => {
                    let g = self.affine(a, scale, 0.0);
                    self.accumulate(&mut adj, x, g);
                }
                Op::Tanh(x) => {
                    // d tanh = 1 - tanh^2, expressed through the output node
                    // so the derivative itself stays differentiable.
                    let t = NodeId(i);
                    let t2 = self.mul(t, t);
                    let d = self.affine(t2, -1.0, 1.0);
                    let g = self.mul(a, d);
                    self.accumulate(&mut adj, x, g);
                }
                Op::Sigmoid(x) => {
                    let s = NodeId(i);
                    let one_minus = self.affine(s, -1.0, 1.0);
                    let d = self.mul(s, one_minus);
                    let g = self.mul(a, d);
                    self.accumulate(&mut adj, x, g);
                }
                Op::Softplus(x) => {
                    let d = self.sigmoid(x);
                    let g = self.mul(a, d);
                    self.accumulate(&mut adj, x, g);
                }
                Op::Sqrt(x) => {
                    let r = NodeId(i);
                    let inv = self.recip(r);
                    let half = self.affine(inv, 0.5, 0.0);
                    let g = self.mul(a, half);
                    self.accumulate(&mut adj, x, g);
                }
                Op::Recip(x) => {
                    let r = NodeId(i);
                    let r2 = self.mul(r, r);
                    let g = self.mul(a, r2);
                    let neg = self.affine(g, -1.0, 0.0);
                    self.accumulate(&mut adj, x, neg);
                }
                Op::ConcatCols(x, y) => {
                    let cx = self.value(x).cols();
                    let cy = self.value(y).cols();
                    let gx = self.slice_cols(a, 0, cx);
                    self.accumulate(&mut adj, x, gx);
                    let gy = self.slice_cols(a, cx, cx + cy);
                    self.accumulate(&mut adj, y, gy);
                }
                Op::SliceCols(x, lo, hi) => {
                    let (rows, total) = (self.value(x).rows(), self.value(x).cols());
                    let mut g = a;
                    if lo > 0 {
                        let left = self.constant(Tensor::zeros(rows, lo));
                        g = self.concat_cols(left, g);
                    }
                    if hi < total {
                        let right = self.constant(Tensor::zeros(rows, total - hi));
                        g = self.concat_cols(g, right);
                    }
                    self.accumulate(&mut adj, x, g);
                }
            }
        }
        Ok(Adjoints { adj })
    }

    fn accumulate(&mut self, adj: &mut [Option<NodeId>], target: NodeId, contrib: NodeId) {
        if matches!(self.nodes[target.index()].op, Op::Constant) {
            return;
        }
        adj[target.index()] = Some(match adj[target.index()] {
            None => contrib,
            Some(prev) => self.add(prev, contrib),
        });
    }

    /// Reverse-mode gradient of a scalar root with respect to the given
    /// leaves.
    pub fn grad_scalar(&mut self, root: NodeId, leaves: &[NodeId]) -> Result<Vec<Tensor>> {
        let adj = self.backward(root, None)?;
        Ok(leaves.iter().map(|&l| adj.tensor(self, l)).collect())
    }

    /// Recompute every node value from the recorded operations and the
    /// stored leaf values. Returns true when the replay reproduces the
    /// stored values bit for bit.
    pub fn replay_matches(&self) -> bool {
        let mut values: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match &node.op {
                Op::Leaf | Op::Constant => node.value.clone(),
                Op::Add(x, y) => values[x.index()].add(&values[y.index()]),
                Op::Sub(x, y) => values[x.index()].sub(&values[y.index()]),
                Op::Mul(x, y) => values[x.index()].mul(&values[y.index()]),
                Op::MatMul(x, y) => values[x.index()].matmul(&values[y.index()]),
                Op::Transpose(x) => values[x.index()].transpose(),
                Op::AddRow(x, r) => values[x.index()].add_row(&values[r.index()]),
                Op::SumRows(x) => values[x.index()].sum_rows(),
                Op::SumCols(x) => values[x.index()].sum_cols(),
                Op::SumAll(x) => values[x.index()].sum_all(),
                Op::BroadcastRows(x, m) => values[x.index()].broadcast_rows(*m),
                Op::BroadcastCols(x, n) => values[x.index()].broadcast_cols(*n),
                Op::BroadcastScalar(x, m, n) => values[x.index()].broadcast_scalar(*m, *n),
                Op::Affine(x, a, b) => values[x.index()].affine(*a, *b),
                Op::Tanh(x) => values[x.index()].map(f64::tanh),
                Op::Sigmoid(x) => values[x.index()].map(stable_sigmoid),
                Op::Softplus(x) => values[x.index()].map(stable_softplus),
                Op::Sqrt(x) => values[x.index()].map(f64::sqrt),
                Op::Recip(x) => values[x.index()].map(f64::recip),
                Op::ConcatCols(x, y) => values[x.index()].concat_cols(&values[y.index()]),
                Op::SliceCols(x, lo, hi) => values[x.index()].slice_cols(*lo, *hi),
            };
            values.push(v);
        }
        self.nodes
            .iter()
            .zip(&values)
            .all(|(n, v)| n.value.data().iter().zip(v.data()).all(|(a, b)| a.to_bits() == b.to_bits()))
    }
}
