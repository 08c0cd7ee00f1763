//! Amortized neural likelihood-ratio estimation for simulation-based
//! inference.
//!
//! * [`numcore`]: MLP classifier with reverse-mode gradients, BCE-with-logits,
//!   Adam and splittable random streams.
//! * [`tasks`]: benchmark priors, simulators and exact oracles.
//! * [`estimators`]: NRE, BNRE and the direct pairwise estimator (DNRE),
//!   their training loop and checkpoints.
//! * [`posterior`]: posterior log densities, including the Monte Carlo
//!   marginalization of the pairwise ratio.
//! * [`samplers`]: likelihood-free random-walk Metropolis-Hastings and HMC.
//! * [`diagnostics`]: ratio MSE, C2ST, expected coverage, log posterior at the
//!   truth and candidate rankings.

pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod numcore;
pub mod posterior;
pub mod samplers;
pub mod tasks;

pub use error::{Error, ErrorCategory, Result};
