//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by fitting, initialization and the surrounding tooling.
#[derive(Debug, Clone, Error)]
pub enum MtError {
    /// An argument is outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Input data cannot support the requested computation.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A model assumption failed numerically (for example a non-monotone
    /// tabulated mean transform, signalling bad rho tuning).
    #[error("assumption violation: {0}")]
    AssumptionViolation(String),

    /// The robust initialization produced no usable candidate.
    #[error("initialization failure: {0}")]
    InitializationFailure(String),

    /// A matrix block that must be invertible is numerically singular.
    #[error("rank deficiency: {0}")]
    RankDeficient(String),

    /// Invalid configuration or invalid user input.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// An iterative procedure exhausted its budget without converging.
    #[error("non-convergence: {0}")]
    NonConvergence(String),

    /// Invariant breach that indicates a bug rather than bad input.
    #[error("internal error: {0}")]
    Internal(String),
}
