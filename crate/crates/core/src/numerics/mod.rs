//! Dense-array math and reverse-mode differentiation substrate.
//!
//! Double precision throughout: the models trained here are tiny, and
//! determinism plus clean gradient checks matter more than speed. Storage is
//! row-major 2-d only; attention is expressed as per-head 2-d matmuls.

mod gradcheck;
mod graph;
mod rng;
mod tensor;

pub use gradcheck::grad_check;
pub use graph::{AttnMask, Gradients, Graph, NodeId};
pub use rng::{derive_seed, hash_str, SplitMix64};
pub use tensor::{NumericsError, Tensor};
