//! Crate-wide error type.
//!
//! All fallible operations return [`Result`]. Variants distinguish the failure
//! classes callers are expected to branch on: invalid input data, integrals that
//! do not exist for the requested model, linear-algebra breakdowns, and numerical
//! failures detected at run time. The CLI maps these onto process exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or configuration value is outside its documented domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A defining integral diverges for the requested model (for example the
    /// mass renormalization integral for an Ohmic coupling density).
    #[error("divergent integral: {0}")]
    DivergentIntegral(String),

    /// A quadrature failed to reach its tolerance within the panel budget.
    #[error("quadrature failure: {0}")]
    Quadrature(String),

    /// Eigendecomposition failure; the message carries conditioning diagnostics.
    #[error("eigendecomposition failure: {0}")]
    Eigen(String),

    /// A matrix that must be invertible (or positive definite) is not.
    #[error("singular matrix: {0}")]
    Singular(String),

    /// Mismatched dimensions between coupled objects.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A state definition is not normalizable or not positive.
    #[error("non-normalizable state: {0}")]
    NonNormalizable(String),

    /// Required data is absent (for example no fringed component in a cat state).
    #[error("missing data: {0}")]
    MissingData(String),

    /// A numerical run broke an invariant it is required to maintain.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Configuration file parsing or validation failure.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
