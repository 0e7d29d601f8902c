//! Test-time refinement of a parametric human-body regressor.
//!
//! The crate is organized bottom-up:
//!
//! - [`body`]: a small differentiable kinematic body model with rigid skinning and
//!   weak-perspective projection.
//! - [`nnet`]: tiny MLP regressors (per-frame learner, temporal teacher), their
//!   reverse-mode gradients, Adam, and weight files.
//! - [`adaptation`]: input corruption, the teacher/learner consistency loss, the
//!   pre-adaptation loop and the regeneration-based bilevel refinement loop.
//! - [`metrics`]: MPJPE, Procrustes-aligned PA-MPJPE and report tables.
//! - [`data`]: synthetic source/target streams, batching and the JSON Lines format.
//! - [`pipeline`]: end-to-end orchestration used by the CLI and the acceptance suite.

pub mod adaptation;
pub mod body;
pub mod data;
mod error;
pub mod metrics;
pub mod nnet;
pub mod pipeline;
pub(crate) mod rng;

pub use error::{Error, Result};
