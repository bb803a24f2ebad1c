//! Numerical laboratory for rank-1 low-rank adaptation geometry.
//!
//! The crate is organized bottom-up:
//!
//! - [`linalg`], [`rng`], [`stats`]: dense carriers, seeded streams, special functions.
//! - [`geometry`]: sphere sampling, cosines, gap extraction, gap spectra, cone statistics.
//! - [`toy_model`]: the Gaussian translation model, its closed-form loss and the
//!   gradient-suppression sweep.
//! - [`adapter`]: `ΔW = (α/r)·B·A`, initializers (random, gap-aligned, noisy-gap),
//!   exact gradients, finite-difference checks, a minibatch trainer and checkpoints.
//! - [`spot_gap`]: per-layer gap diagnostics and safe layer selection.
//! - [`calibration`]: synthetic multi-layer stacks and layer-wise gap estimation.
//! - [`harness`]: experiment recipes behind the `gapinit-lab` binary.

pub mod adapter;
pub mod calibration;
pub mod error;
mod fsutil;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod rng;
pub mod spot_gap;
pub mod stats;
pub mod toy_model;

pub use error::{LabError, Result};
pub use linalg::{DenseMatrix, DenseVector};
pub use rng::Rng;
