//! Numerical building blocks: the MLP classifier with reverse-mode gradients,
//! the logit loss, Adam, and seeded random streams.
//!
//! Dense matrix products go through `ndarray` (backed by `matrixmultiply`).

pub mod adam;
pub mod loss;
pub mod math;
pub mod mlp;
pub mod rng;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::bce_with_logits;
pub use mlp::{Activation, BatchCache, Dense, Gradients, MlpNetwork};
pub use rng::Rng;
