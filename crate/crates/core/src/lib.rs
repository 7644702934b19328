//! Training lab for comparing neural-network reinitialization regimes.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: tensors, RNG streams, initializers, gradient checks
//! - [`model`]: layers, block-structured networks, SGD and the training loop
//! - [`reinit`]: masks, the reinitialization update and the six regimes
//! - [`diagnostics`]: margins, weight size, flatness and round speed
//! - [`metalab`]: sign tests with Holm correction and CART trees
//! - [`harness`]: synthetic data, presets, experiment matrices and reports

pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod metalab;
pub mod model;
pub mod numerics;
pub mod reinit;

pub use error::{LabError, Result};
