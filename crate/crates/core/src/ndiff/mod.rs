//! Small dense-tensor engine with reverse-mode differentiation.
//!
//! Everything is 2-D and `f64`. A [`Graph`] records operations as they
//! are evaluated; [`Graph::backward`] returns exact gradients of a scalar
//! output. On top sit fully connected networks ([`Mlp`]), the tanh-squashed
//! Gaussian action head and Adam.

mod adam;
pub mod checkpoint;
mod gaussian;
mod graph;
mod mlp;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use checkpoint::Checkpoint;
pub use gaussian::{squashed_gaussian_action, squashed_sample, ActionBounds, LOG_STD_MAX, LOG_STD_MIN};
pub use graph::{Gradients, Graph, Var};
pub use mlp::{mlp_forward, Activation, Mlp, MlpSpec};
pub use tensor::{matmul, Tensor};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NdError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
}
