//! High-dimensional bootstrap inference for max-type statistics.
//!
//! The crate approximates the law of the scaled sample mean
//! `S_n = n^(-1/2) Σ_i X_i` over rectangles via Gaussian multiplier and
//! empirical bootstrap replicates, and builds the downstream procedures on
//! top: bootstrap Lasso penalty selection, simultaneous confidence
//! rectangles, stepdown multiple testing with adjusted p-values,
//! intersection bounds, and a two-sample covariance comparison test.
//! The `sim` module adds scenario generators and the Monte Carlo
//! experiments used to verify the procedures end to end.

// Guards spelled `!(x > 0.0)` are deliberate: NaN must take the failure
// branch, and the negated form keeps that visible at the check site.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bootstrap;
pub mod error;
pub mod gaussian;
pub mod inference;
pub mod lasso;
pub mod rng;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
