//! Fully connected networks and their graph-level input gradient.

use super::{Bound, Graph, NodeId, ParamSet, Rng, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
    Sigmoid,
}

impl Activation {
    fn apply(self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        match self {
            Activation::Identity => Ok(x),
            Activation::Tanh => g.tanh(x),
            Activation::Sigmoid => g.sigmoid(x),
        }
    }
}

/// Layer widths and activations; parameters live in a [`ParamSet`] as
/// `"{i}.w"` (`in×out`) and `"{i}.b"` (`out`).
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub widths: Vec<usize>,
    pub hidden: Activation,
    pub output: Activation,
}

impl Mlp {
    pub fn new(widths: Vec<usize>, hidden: Activation, output: Activation) -> Self {
        assert!(widths.len() >= 2, "an MLP needs input and output widths");
        Self { widths, hidden, output }
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn layer_count(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn init(&self, rng: &mut Rng) -> ParamSet {
        let mut p = ParamSet::new();
        for (i, w) in self.widths.windows(2).enumerate() {
            p.init_dense(&i.to_string(), w[0], w[1], rng);
        }
        p
    }

    pub fn bind<'a>(&'a self, bound: &Bound, prefix: &str) -> Result<BoundMlp<'a>> {
        let name = |i: usize, s: &str| {
            if prefix.is_empty() {
                format!("{i}.{s}")
            } else {
                format!("{prefix}.{i}.{s}")
            }
        };
        let layers = (0..self.layer_count())
            .map(|i| Ok((bound.id(&name(i, "w"))?, bound.id(&name(i, "b"))?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(BoundMlp { spec: self, layers })
    }
}

pub struct BoundMlp<'a> {
    spec: &'a Mlp,
    layers: Vec<(NodeId, NodeId)>,
}

impl BoundMlp<'_> {
    pub fn input_width(&self) -> usize {
        self.spec.input_width()
    }

    /// Forward pass on a `B×in` batch.
    pub fn forward(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let a = g.matmul(h, w)?;
            let a = g.add_row(a, b)?;
            let act = if i == last { self.spec.output } else { self.spec.hidden };
            h = act.apply(g, a)?;
        }
        Ok(h)
    }

    /// Row-wise gradient of a scalar-output tanh network with respect to its
    /// input, for a `B×in` batch. The result is built from ordinary graph ops
    /// (transposed weights and `1 − h²` factors), so it can be differentiated
    /// again with respect to the network parameters.
    pub fn input_gradient(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        if self.spec.output_width() != 1 {
            return Err(Error::Contract(format!(
                "input gradient needs a scalar network, output width is {}",
                self.spec.output_width()
            )));
        }
        if self.layers.len() > 1 && self.spec.hidden != Activation::Tanh {
            return Err(Error::Contract(format!(
                "input gradient supports tanh hidden layers only, got {:?}",
                self.spec.hidden
            )));
        }
        if self.spec.output != Activation::Identity {
            return Err(Error::Contract(format!(
                "input gradient needs a linear output layer, got {:?}",
                self.spec.output
            )));
        }
        let (batch, _) = g.value(x).dims2()?;

        let mut hidden = Vec::with_capacity(self.layers.len() - 1);
        let mut h = x;
        for &(w, b) in &self.layers[..self.layers.len() - 1] {
            let a = g.matmul(h, w)?;
            let a = g.add_row(a, b)?;
            h = g.tanh(a)?;
            hidden.push(h);
        }

        let ones = g.constant(Tensor::ones(&[batch, 1]));
        let (w_out, _) = *self.layers.last().unwrap();
        let w_out_t = g.transpose(w_out)?;
        let mut delta = g.matmul(ones, w_out_t)?;
        for (&(w, _), &h) in self.layers[..self.layers.len() - 1].iter().zip(&hidden).rev() {
            let h2 = g.square(h)?;
            let neg = g.scale(h2, -1.0)?;
            let deriv = g.add_scalar(neg, 1.0)?;
            let d = g.mul(delta, deriv)?;
            let w_t = g.transpose(w)?;
            delta = g.matmul(d, w_t)?;
        }
        Ok(delta)
    }
}
