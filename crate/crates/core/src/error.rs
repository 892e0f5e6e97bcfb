use thiserror::Error;

/// Errors raised by the ensemble machinery.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not Hermitian: entry ({row}, {col}) differs from its mirror by {deviation:e}")]
    NotHermitian {
        row: usize,
        col: usize,
        deviation: f64,
    },

    #[error("trace is not 1 (got {trace})")]
    TraceNotOne { trace: f64 },

    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositive { min_eigenvalue: f64 },

    #[error("state is not normalized (norm {norm})")]
    NotNormalized { norm: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(&'static str),

    #[error("too many divided-difference nodes: {count} (limit {limit})")]
    TooManyNodes { count: usize, limit: usize },

    #[error("divided-difference node {index} is not finite")]
    NonFiniteNode { index: usize },

    #[error("empty node set")]
    EmptyNodes,

    #[error("contour radius does not enclose the spectrum")]
    ContourTooTight,

    #[error("contour needs at least {min} points, got {got}")]
    TooFewContourPoints { got: usize, min: usize },

    #[error("|delta| = {delta} is outside the open interval (-1/2, 1/2)")]
    OutOfRange { delta: f64 },

    #[error("density matrix is not full-range (smallest eigenvalue {min_eigenvalue:e})")]
    NotFullRange { min_eigenvalue: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("tolerance {0:e} is below the supported floor 1e-12")]
    ToleranceTooSmall(f64),

    #[error("temperature spread {spread} exceeds the sampler limit {limit} (acceptance below e^-{limit})")]
    SpreadTooLarge { spread: f64, limit: f64 },

    #[error("sample batch is empty")]
    EmptyBatch,

    #[error("sample batch was not drawn from this ensemble")]
    SourceMismatch,

    #[error("target mean {target} is not strictly inside the spectral range [{min}, {max}]")]
    TargetUnattainable { target: f64, min: f64, max: f64 },

    #[error("observable is a multiple of the identity; no constraint to satisfy")]
    ScalarObservable,

    #[error("count must be at least 1")]
    ZeroCount,
}

pub type Result<T> = std::result::Result<T, Error>;
