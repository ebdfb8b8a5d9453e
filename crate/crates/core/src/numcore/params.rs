//! Named parameter tensors and their binding into a [`Graph`].

use std::collections::BTreeMap;

use super::{Graph, NodeId, Rng, Tensor};
use crate::error::{Error, Result};

/// Ordered map of parameter name to value.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.tensors.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Contract(format!("missing parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::Contract(format!("missing parameter `{name}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Adds every parameter to `graph` as a differentiable leaf.
    pub fn bind(&self, graph: &mut Graph) -> Bound {
        let ids = self
            .tensors
            .iter()
            .map(|(k, v)| (k.clone(), graph.param(v.clone())))
            .collect();
        Bound { ids }
    }

    /// Adds every parameter as a constant (inference only).
    pub fn bind_frozen(&self, graph: &mut Graph) -> Bound {
        let ids = self
            .tensors
            .iter()
            .map(|(k, v)| (k.clone(), graph.constant(v.clone())))
            .collect();
        Bound { ids }
    }

    /// Glorot-uniform `fan_in×fan_out` weight and zero bias under `prefix`.
    pub fn init_dense(&mut self, prefix: &str, fan_in: usize, fan_out: usize, rng: &mut Rng) {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        self.insert(
            format!("{prefix}.w"),
            rng.uniform_tensor(&[fan_in, fan_out], -limit, limit),
        );
        self.insert(format!("{prefix}.b"), Tensor::zeros(&[fan_out]));
    }

    /// Merges `other` under `prefix.`.
    pub fn extend_prefixed(&mut self, prefix: &str, other: ParamSet) {
        for (k, v) in other.tensors {
            self.tensors.insert(format!("{prefix}.{k}"), v);
        }
    }

    /// Parameters whose names start with `prefix.`, with the prefix removed.
    pub fn subset(&self, prefix: &str) -> ParamSet {
        let dotted = format!("{prefix}.");
        ParamSet {
            tensors: self
                .tensors
                .iter()
                .filter_map(|(k, v)| k.strip_prefix(&dotted).map(|s| (s.to_string(), v.clone())))
                .collect(),
        }
    }
}

impl FromIterator<(String, Tensor)> for ParamSet {
    fn from_iter<I: IntoIterator<Item = (String, Tensor)>>(iter: I) -> Self {
        Self {
            tensors: iter.into_iter().collect(),
        }
    }
}

/// Node handles of a bound [`ParamSet`].
#[derive(Clone, Debug)]
pub struct Bound {
    ids: BTreeMap<String, NodeId>,
}

impl Bound {
    /// Names existing graph nodes as parameters.
    pub fn from_ids(ids: impl IntoIterator<Item = (String, NodeId)>) -> Self {
        Self {
            ids: ids.into_iter().collect(),
        }
    }

    pub fn id(&self, name: &str) -> Result<NodeId> {
        self.ids
            .get(name)
            .copied()
            .ok_or_else(|| Error::Contract(format!("parameter `{name}` not bound")))
    }

    /// Accumulated gradients in parameter order (zeros where unreached).
    pub fn grads(&self, graph: &Graph) -> ParamSet {
        self.ids
            .iter()
            .map(|(k, &id)| (k.clone(), graph.grad_or_zeros(id)))
            .collect()
    }
}
