//! Error types shared across the library.

use thiserror::Error;

/// Errors produced by the estimation and simulation primitives.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("matrix is not positive definite after repair")]
    NotPositiveDefinite,
    #[error("index range {start}..{end} out of bounds for dimension {dim}")]
    IndexOutOfRange { start: usize, end: usize, dim: usize },
    #[error("mixture has no components")]
    EmptyMixture,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("covariance is singular")]
    SingularCovariance,
    #[error("degenerate geometry: zero-length direction vector")]
    DegenerateGeometry,
    #[error("no physical solution for measurement inversion")]
    NoPhysicalSolution,
    #[error("measurement inversion is not supported for this landmark kind")]
    UnsupportedKind,
    #[error("measurement function evaluation failed: {0}")]
    FunctionEvaluationFailure(Box<Error>),
    #[error("innovation covariance is singular")]
    SingularInnovation,
    #[error("assignment problem is infeasible")]
    Infeasible,
    #[error("hypothesis set is empty")]
    EmptyHypothesisSet,
    #[error("all data-association hypotheses failed; filter diverged")]
    NoFeasibleHypothesis,
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("reflecting plane is degenerate (zero normal)")]
    DegeneratePlane,
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
