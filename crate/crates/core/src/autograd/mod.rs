//! Minimal reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Graph`] records ops as they are evaluated; [`Graph::backward`]
//! propagates exact vector-Jacobian products back to the leaves. Graphs are
//! single-shot: build one per loss evaluation.
//!
//! ```
//! use skelattack::autograd::{Graph, Tensor};
//!
//! let mut g = Graph::<f64>::new();
//! let x = g.variable(Tensor::vector(vec![1.0, -2.0, 3.0]));
//! let loss = g.sum_squares(x);
//! g.backward(loss).unwrap();
//! assert_eq!(g.grad(x).unwrap(), &[2.0, -4.0, 6.0]);
//! ```

mod adam;
mod backward;
mod gradcheck;
mod graph;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, grad_check_coords, relative_error, GradCheckReport};
pub use graph::{log_softmax, softmax, Graph, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AutogradError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: {detail}")]
    InvalidArgument { op: &'static str, detail: String },
    #[error("{op}: input outside domain ({detail})")]
    Domain { op: &'static str, detail: String },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("graph was already backpropagated; build a new graph")]
    AlreadyBackpropagated,
    #[error("non-finite {what}")]
    NonFinite { what: String },
}
