//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Graph`] is an append-only tape: nodes are created in topological order
//! and [`Graph::backward`] walks them in reverse. Gradients accumulate across
//! calls to `backward` until [`Graph::zero_grad`] is called, so running
//! `backward` twice on the same root doubles every gradient.
//!
//! Higher-order derivatives are not supported in general. Input gradients of
//! tanh networks are instead expressed as ordinary graph nodes (see
//! [`super::mlp::BoundMlp::input_gradient`]) which this engine then
//! differentiates once more.
//!
//! Every forward op checks its output for NaN/Inf and returns
//! [`Error::NonFinite`] rather than propagating it.

use super::conv::{conv2d_backward_input, conv2d_backward_kernel, conv2d_forward, conv_transpose2d_forward};
use super::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Square(NodeId),
    Clamp(NodeId, f64, f64),
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    AddRow(NodeId, NodeId),
    AddChannel(NodeId, NodeId),
    Sum(NodeId),
    Mean(NodeId),
    Reshape(NodeId),
    SliceCols(NodeId, usize, usize),
    ConcatCols(NodeId, NodeId),
    Conv2d {
        input: NodeId,
        kernels: NodeId,
        stride: usize,
        padding: usize,
    },
    ConvTranspose2d {
        input: NodeId,
        kernels: NodeId,
        stride: usize,
        padding: usize,
    },
}

impl Op {
    fn tag(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Tanh(..) => "tanh",
            Op::Sigmoid(..) => "sigmoid",
            Op::Exp(..) => "exp",
            Op::Log(..) => "log",
            Op::Square(..) => "square",
            Op::Clamp(..) => "clamp",
            Op::MatMul(..) => "matmul",
            Op::Transpose(..) => "transpose",
            Op::AddRow(..) => "add_row",
            Op::AddChannel(..) => "add_channel",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::Reshape(..) => "reshape",
            Op::SliceCols(..) => "slice_cols",
            Op::ConcatCols(..) => "concat_cols",
            Op::Conv2d { .. } => "conv2d",
            Op::ConvTranspose2d { .. } => "conv_transpose2d",
        }
    }

    fn parents(&self) -> Vec<NodeId> {
        match *self {
            Op::Leaf => vec![],
            Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::MatMul(a, b)
            | Op::AddRow(a, b)
            | Op::AddChannel(a, b)
            | Op::ConcatCols(a, b) => vec![a, b],
            Op::Conv2d { input, kernels, .. } | Op::ConvTranspose2d { input, kernels, .. } => {
                vec![input, kernels]
            }
            Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Tanh(a)
            | Op::Sigmoid(a)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Square(a)
            | Op::Clamp(a, ..)
            | Op::Transpose(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::Reshape(a)
            | Op::SliceCols(a, ..) => vec![a],
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    tracks_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
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

    /// A constant input; receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push_raw(value, Op::Leaf, false)
    }

    /// A differentiable leaf (model parameter or input under test).
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push_raw(value, Op::Leaf, true)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn op_tag(&self, id: NodeId) -> &'static str {
        self.nodes[id.0].op.tag()
    }

    /// Accumulated gradient, if `backward` reached this node.
    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }

    /// Accumulated gradient, materialized as zeros when never reached.
    pub fn grad_or_zeros(&self, id: NodeId) -> Tensor {
        self.grads[id.0]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(self.value(id).shape()))
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    fn push_raw(&mut self, value: Tensor, op: Op, tracks_grad: bool) -> NodeId {
        self.nodes.push(Node { value, op, tracks_grad });
        self.grads.push(None);
        NodeId(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::NonFinite(op.tag().to_string()));
        }
        let tracks_grad = op.parents().iter().any(|p| self.nodes[p.0].tracks_grad);
        Ok(self.push_raw(value, op, tracks_grad))
    }

    fn binary(&self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() == y.shape() {
            x.zip_map(y, f)
        } else if y.len() == 1 {
            let s = y.data()[0];
            Ok(x.map(|v| f(v, s)))
        } else if x.len() == 1 {
            let s = x.data()[0];
            Ok(y.map(|v| f(s, v)))
        } else {
            Err(Error::Dimension(format!(
                "elementwise operands {:?} and {:?}",
                x.shape(),
                y.shape()
            )))
        }
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.binary(a, b, |x, y| x + y)?;
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.binary(a, b, |x, y| x - y)?;
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.binary(a, b, |x, y| x * y)?;
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        let v = self.value(a).map(|x| x * c);
        self.push(v, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        let v = self.value(a).map(|x| x + c);
        self.push(v, Op::AddScalar(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(f64::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        if let Some(bad) = self.value(a).data().iter().find(|&&x| x <= 0.0) {
            return Err(Error::Domain(format!("log of non-positive value {bad}")));
        }
        let v = self.value(a).map(f64::ln);
        self.push(v, Op::Log(a))
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Square(a))
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where the clamp is active.
    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> Result<NodeId> {
        let v = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(v, Op::Clamp(a, lo, hi))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        self.push(v, Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).transpose()?;
        self.push(v, Op::Transpose(a))
    }

    /// `a[i, j] + row[j]` for a `B×n` matrix and an `n` (or `1×n`) row.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        let (rows, cols) = self.value(a).dims2()?;
        let r = self.value(row);
        if r.len() != cols {
            return Err(Error::Dimension(format!(
                "row of length {} added to {rows}x{cols}",
                r.len()
            )));
        }
        let mut out = self.value(a).clone();
        for chunk in out.data_mut().chunks_mut(cols) {
            for (o, b) in chunk.iter_mut().zip(r.data()) {
                *o += b;
            }
        }
        self.push(out, Op::AddRow(a, row))
    }

    /// Per-channel bias for `N×C×H×W` (or `C×H×W`) data and a length-`C` bias.
    pub fn add_channel(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (channels, plane) = channel_layout(self.value(a).shape())?;
        let b = self.value(bias);
        if b.len() != channels {
            return Err(Error::Dimension(format!(
                "bias of length {} for {channels} channels",
                b.len()
            )));
        }
        let mut out = self.value(a).clone();
        for (i, chunk) in out.data_mut().chunks_mut(plane).enumerate() {
            let c = b.data()[i % channels];
            chunk.iter_mut().for_each(|v| *v += c);
        }
        self.push(out, Op::AddChannel(a, bias))
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        let v = Tensor::scalar(self.value(a).mean());
        self.push(v, Op::Mean(a))
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        let v = self.value(a).reshape(shape)?;
        self.push(v, Op::Reshape(a))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let (rows, cols) = self.value(a).dims2()?;
        if start >= end || end > cols {
            return Err(Error::Dimension(format!(
                "column range {start}..{end} out of 0..{cols}"
            )));
        }
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(rows * (end - start));
        for r in 0..rows {
            out.extend_from_slice(&src[r * cols + start..r * cols + end]);
        }
        let v = Tensor::new(vec![rows, end - start], out)?;
        self.push(v, Op::SliceCols(a, start, end))
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ra, ca) = self.value(a).dims2()?;
        let (rb, cb) = self.value(b).dims2()?;
        if ra != rb {
            return Err(Error::Dimension(format!("cannot concatenate {ra} rows with {rb} rows")));
        }
        let (x, y) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(ra * (ca + cb));
        for r in 0..ra {
            out.extend_from_slice(&x[r * ca..(r + 1) * ca]);
            out.extend_from_slice(&y[r * cb..(r + 1) * cb]);
        }
        let v = Tensor::new(vec![ra, ca + cb], out)?;
        self.push(v, Op::ConcatCols(a, b))
    }

    pub fn conv2d(&mut self, input: NodeId, kernels: NodeId, stride: usize, padding: usize) -> Result<NodeId> {
        let v = conv2d_forward(self.value(input), self.value(kernels), stride, padding)?;
        self.push(
            v,
            Op::Conv2d {
                input,
                kernels,
                stride,
                padding,
            },
        )
    }

    /// Transposed convolution with kernels laid out `Cin×Cout×kH×kW`.
    pub fn conv_transpose2d(
        &mut self,
        input: NodeId,
        kernels: NodeId,
        stride: usize,
        padding: usize,
        output_padding: usize,
    ) -> Result<NodeId> {
        let v = conv_transpose2d_forward(self.value(input), self.value(kernels), stride, padding, output_padding)?;
        self.push(
            v,
            Op::ConvTranspose2d {
                input,
                kernels,
                stride,
                padding,
            },
        )
    }

    /// Back-propagates from a single-element root, adding into the stored gradients.
    pub fn backward(&mut self, root: NodeId) -> Result<()> {
        if self.value(root).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar root, got shape {:?}",
                self.value(root).shape()
            )));
        }
        let mut local: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        local[root.0] = Some(Tensor::ones(self.value(root).shape()));

        for i in (0..=root.0).rev() {
            let Some(g) = local[i].take() else { continue };
            if !self.nodes[i].tracks_grad {
                continue;
            }
            for (parent, contribution) in self.vjp(i, &g)? {
                if !self.nodes[parent.0].tracks_grad {
                    continue;
                }
                match &mut local[parent.0] {
                    Some(acc) => acc.add_assign(&contribution)?,
                    slot @ None => *slot = Some(contribution),
                }
            }
            match &mut self.grads[i] {
                Some(acc) => acc.add_assign(&g)?,
                slot @ None => *slot = Some(g),
            }
        }
        Ok(())
    }

    /// Vector-Jacobian products of node `i` for each parent.
    fn vjp(&self, i: usize, g: &Tensor) -> Result<Vec<(NodeId, Tensor)>> {
        let node = &self.nodes[i];
        let y = &node.value;
        Ok(match node.op {
            Op::Leaf => vec![],
            Op::Add(a, b) => vec![
                (a, self.unbroadcast(a, g.clone())?),
                (b, self.unbroadcast(b, g.clone())?),
            ],
            Op::Sub(a, b) => vec![
                (a, self.unbroadcast(a, g.clone())?),
                (b, self.unbroadcast(b, g.map(|v| -v))?),
            ],
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(a), self.value(b));
                let ga = self.broadcast_product(g, vb)?;
                let gb = self.broadcast_product(g, va)?;
                vec![(a, self.unbroadcast(a, ga)?), (b, self.unbroadcast(b, gb)?)]
            }
            Op::Scale(a, c) => vec![(a, g.map(|v| v * c))],
            Op::AddScalar(a) => vec![(a, g.clone())],
            Op::Tanh(a) => vec![(a, g.zip_map(y, |g, y| g * (1.0 - y * y))?)],
            Op::Sigmoid(a) => vec![(a, g.zip_map(y, |g, y| g * y * (1.0 - y))?)],
            Op::Exp(a) => vec![(a, g.zip_map(y, |g, y| g * y)?)],
            Op::Log(a) => vec![(a, g.zip_map(self.value(a), |g, x| g / x)?)],
            Op::Square(a) => vec![(a, g.zip_map(self.value(a), |g, x| 2.0 * g * x)?)],
            Op::Clamp(a, lo, hi) => vec![(
                a,
                g.zip_map(self.value(a), |g, x| if x < lo || x > hi { 0.0 } else { g })?,
            )],
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(a), self.value(b));
                vec![(a, g.matmul_t(false, vb, true)?), (b, va.matmul_t(true, g, false)?)]
            }
            Op::Transpose(a) => vec![(a, g.transpose()?)],
            Op::AddRow(a, row) => {
                let (_, cols) = g.dims2()?;
                let mut acc = vec![0.0; cols];
                for chunk in g.data().chunks(cols) {
                    for (s, v) in acc.iter_mut().zip(chunk) {
                        *s += v;
                    }
                }
                let shape = self.value(row).shape().to_vec();
                vec![(a, g.clone()), (row, Tensor::new(shape, acc)?)]
            }
            Op::AddChannel(a, bias) => {
                let (channels, plane) = channel_layout(g.shape())?;
                let mut acc = vec![0.0; channels];
                for (i, chunk) in g.data().chunks(plane).enumerate() {
                    acc[i % channels] += chunk.iter().sum::<f64>();
                }
                let shape = self.value(bias).shape().to_vec();
                vec![(a, g.clone()), (bias, Tensor::new(shape, acc)?)]
            }
            Op::Sum(a) => {
                let s = g.data()[0];
                vec![(a, Tensor::full(self.value(a).shape(), s))]
            }
            Op::Mean(a) => {
                let va = self.value(a);
                let s = g.data()[0] / va.len() as f64;
                vec![(a, Tensor::full(va.shape(), s))]
            }
            Op::Reshape(a) => vec![(a, g.reshape(self.value(a).shape())?)],
            Op::SliceCols(a, start, end) => {
                let (rows, cols) = self.value(a).dims2()?;
                let w = end - start;
                let mut out = vec![0.0; rows * cols];
                for r in 0..rows {
                    out[r * cols + start..r * cols + end].copy_from_slice(&g.data()[r * w..(r + 1) * w]);
                }
                vec![(a, Tensor::new(vec![rows, cols], out)?)]
            }
            Op::ConcatCols(a, b) => {
                let (rows, ca) = self.value(a).dims2()?;
                let (_, cb) = self.value(b).dims2()?;
                let mut ga = Vec::with_capacity(rows * ca);
                let mut gb = Vec::with_capacity(rows * cb);
                for chunk in g.data().chunks(ca + cb) {
                    ga.extend_from_slice(&chunk[..ca]);
                    gb.extend_from_slice(&chunk[ca..]);
                }
                vec![
                    (a, Tensor::new(vec![rows, ca], ga)?),
                    (b, Tensor::new(vec![rows, cb], gb)?),
                ]
            }
            Op::Conv2d {
                input,
                kernels,
                stride,
                padding,
            } => {
                let (x, k) = (self.value(input), self.value(kernels));
                vec![
                    (input, conv2d_backward_input(g, k, x.shape(), stride, padding)?),
                    (kernels, conv2d_backward_kernel(x, g, k.shape(), stride, padding)?),
                ]
            }
            Op::ConvTranspose2d {
                input,
                kernels,
                stride,
                padding,
            } => {
                let (x, k) = (self.value(input), self.value(kernels));
                vec![
                    (input, conv2d_forward(g, k, stride, padding)?),
                    (kernels, conv2d_backward_kernel(g, x, k.shape(), stride, padding)?),
                ]
            }
        })
    }

    fn broadcast_product(&self, g: &Tensor, other: &Tensor) -> Result<Tensor> {
        if other.shape() == g.shape() {
            g.zip_map(other, |a, b| a * b)
        } else {
            let s = other.data()[0];
            Ok(g.map(|a| a * s))
        }
    }

    /// Reduces a full-shape gradient back onto a broadcast scalar operand.
    fn unbroadcast(&self, operand: NodeId, g: Tensor) -> Result<Tensor> {
        let shape = self.value(operand).shape();
        if shape == g.shape() {
            Ok(g)
        } else {
            Ok(Tensor::full(shape, g.sum()))
        }
    }
}

/// Channel count and plane size of `C×H×W` or `N×C×H×W` data.
fn channel_layout(shape: &[usize]) -> Result<(usize, usize)> {
    match *shape {
        [c, h, w] | [_, c, h, w] => Ok((c, h * w)),
        _ => Err(Error::Dimension(format!(
            "channel bias needs C×H×W or N×C×H×W data, got {shape:?}"
        ))),
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(3.0));
        let y = g.square(x).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn constant_gets_no_gradient() {
        let mut g = Graph::new();
        let c = g.constant(Tensor::scalar(2.0));
        let x = g.param(Tensor::scalar(1.5));
        let y = g.mul(c, x).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad_or_zeros(c).data(), &[0.0]);
        assert_eq!(g.grad(x).unwrap().data(), &[2.0]);
    }

    #[test]
    fn backward_twice_doubles() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0, -2.0]));
        let t = g.tanh(x).unwrap();
        let y = g.sum(t).unwrap();
        g.backward(y).unwrap();
        let once = g.grad(x).unwrap().clone();
        g.backward(y).unwrap();
        let twice = g.grad(x).unwrap();
        for (a, b) in once.data().iter().zip(twice.data()) {
            assert!((2.0 * a - b).abs() < 1e-15);
        }
        g.zero_grad();
        assert!(g.grad(x).is_none());
    }

    #[test]
    fn non_scalar_root_is_contract_error() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(g.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn log_domain_error() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0, 0.0]));
        assert!(matches!(g.log(x), Err(Error::Domain(_))));
    }

    #[test]
    fn pointwise_values() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(vec![0.0]));
        let t = g.tanh(x).unwrap();
        assert_eq!(g.value(t).data(), &[0.0]);
        let v = g.constant(Tensor::vector(vec![-2.0, 3.0]));
        let s = g.square(v).unwrap();
        assert_eq!(g.value(s).data(), &[4.0, 9.0]);
    }

    #[test]
    fn overflow_is_reported() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(1000.0));
        assert!(matches!(g.exp(x), Err(Error::NonFinite(_))));
    }

    #[test]
    fn scalar_broadcast() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let c = g.param(Tensor::scalar(2.0));
        let y = g.mul(x, c).unwrap();
        let s = g.sum(y).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(c).unwrap().data(), &[6.0]);
        assert_eq!(g.grad(x).unwrap().data(), &[2.0, 2.0, 2.0]);
    }
}
