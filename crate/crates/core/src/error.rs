//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors raised by form parsing, quadrature and the solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },

    #[error("form is not homogeneous: found degrees {first} and {second}")]
    MixedDegree { first: u32, second: u32 },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("action is not positive on the sphere (estimated minimum {min:.3e})")]
    AssumptionViolation { min: f64 },

    #[error("degree {degree} is not a positive even number")]
    OddDegree { degree: u32 },

    #[error("sphere quadrature did not converge (exactness {exactness}, relative change {rel_change:.3e})")]
    QuadratureNonConvergence { exactness: usize, rel_change: f64 },

    #[error("non-finite integrand value at node {node}")]
    NonFinite { node: usize },

    #[error("moment matrix is ill-conditioned (condition estimate {cond:.3e})")]
    IllConditioned { cond: f64 },

    #[error("Cholesky factorization failed even after ridge {ridge:.3e}")]
    Factorization { ridge: f64 },

    #[error("moment matrix is not positive semidefinite (min eigenvalue {min_eig:.3e}, trace {trace:.3e})")]
    PsdViolation { min_eig: f64, trace: f64 },

    #[error("unsupported dimension {0}")]
    UnsupportedDimension(usize),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("malformed problem dump at line {line}: {msg}")]
    Dump { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
