//! Crate-wide error type and result alias.

use crate::lasso::LassoFit;

/// Errors shared by every module in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Input data violates a structural precondition (shape, finiteness, emptiness).
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// A coordinate has zero (or negative) empirical variance where a positive one is required.
    #[error("degenerate coordinate {index}: zero empirical variance")]
    DegenerateCoordinate { index: usize },

    /// A covariance-comparison pair has a zero variance estimate on both samples.
    #[error("degenerate pair ({j}, {k}): zero combined variance estimate")]
    DegeneratePair { j: usize, k: usize },

    /// Operation requires a multiplier scheme but got a different one.
    #[error("wrong bootstrap scheme: {0}")]
    WrongScheme(String),

    /// Claimed covariance matrix is indefinite; `pivot` is the most negative pivot seen.
    #[error("matrix is not positive semidefinite: most negative pivot {pivot:e}")]
    Indefinite { pivot: f64 },

    /// Coordinate descent did not meet the tolerance within the sweep budget.
    /// Carries the last iterate so callers can inspect or resume.
    #[error("no convergence after {iterations} sweeps (max coordinate change {last_change:e})")]
    NonConvergence {
        iterations: usize,
        last_change: f64,
        last_fit: Box<LassoFit>,
    },

    /// Configuration file or parameter value is invalid.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
