//! Adversarial attacks on skeleton-based action classifiers.
//!
//! The crate is organised bottom-up:
//!
//! - [`motion`]: skeletons, motions, bone lengths, forward differences, file IO
//! - [`autograd`]: a small reverse-mode tape with Adam and gradient checking
//! - [`datagen`]: procedural labeled datasets
//! - [`models`]: four classifier architectures, training and checkpoints
//! - [`attack`]: perceptual and classification losses and the iterative attack
//! - [`analysis`]: transfer evaluation and joint-displacement correlations
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision most callers want.

pub mod analysis;
pub mod attack;
pub mod autograd;
pub mod datagen;
pub mod models;
pub mod motion;
pub mod verify;
mod scalar;

pub use scalar::Scalar;

pub type Motion64 = motion::Motion<f64>;
pub type Motion32 = motion::Motion<f32>;
pub type Tensor64 = autograd::Tensor<f64>;
pub type Graph64 = autograd::Graph<f64>;
pub type Dataset64 = datagen::Dataset<f64>;
pub type Classifier64 = models::Classifier<f64>;
pub type Classifier32 = models::Classifier<f32>;
pub type AttackResult64 = attack::AttackResult<f64>;

/// Version of the toolkit itself.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
