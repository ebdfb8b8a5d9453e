//! Tensors, reverse-mode autodiff, Adam and the seeded RNG.

mod adam;
pub mod checkpoint;
pub mod conv;
mod graph;
mod mlp;
mod params;
mod rng;
mod tensor;

pub use adam::AdamState;
pub use graph::{Graph, NodeId};
pub use mlp::{Activation, BoundMlp, Mlp};
pub use params::{Bound, ParamSet};
pub use rng::Rng;
pub use tensor::Tensor;
