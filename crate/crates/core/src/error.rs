//! Error type shared by the library.

use thiserror::Error;

/// Errors produced by the numerical routines of this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("ambient dimension mismatch: {left} vs {right}")]
    AmbientMismatch { left: usize, right: usize },

    #[error("shape mismatch in {what}: expected {expected:?}, found {found:?}")]
    Shape {
        what: String,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("list `{list}` has length {found}, expected {expected}")]
    ListLength {
        list: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("parameter vector has length {found}, system has {expected} parameters")]
    ParamCount { expected: usize, found: usize },

    #[error("subspace is not contained in the enclosing subspace (residual {residual:.3e})")]
    NotContained { residual: f64 },

    #[error("basis is not orthonormal (residual {residual:.3e})")]
    NotOrthonormal { residual: f64 },

    #[error("resolvent I - zA is near-singular (condition estimate {condition:.3e})")]
    NearSingular { condition: f64 },

    #[error("system is not conservative (worst residual {residual:.3e})")]
    NotConservative { residual: f64 },

    #[error("condition ({condition}) fails (residual {residual:.3e})")]
    ConditionFailed {
        condition: &'static str,
        residual: f64,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("truncation tail diverges: ratio {ratio:.4} >= 1")]
    DivergentTail { ratio: f64 },

    #[error("close-connectedness implication violated: {0}")]
    ImplicationViolated(String),

    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error("{context}: {message}")]
    Format { context: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
