//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Arithmetic between elements of distinct prime fields.
    #[error("operands belong to different prime fields")]
    ModulusMismatch,

    /// Multiplicative inverse of zero.
    #[error("division by zero in the prime field")]
    DivisionByZero,

    /// An exhaustive computation exceeds its configured budget.
    #[error("{what}: requested {requested} exceeds budget {limit}")]
    Capacity {
        what: &'static str,
        limit: u64,
        requested: u64,
    },

    /// Caller-supplied parameter outside the operation's domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The requested prime interval contains no integer at all.
    #[error("empty prime interval: no integer p satisfies {lo_desc} < p <= {hi_desc}")]
    EmptyInterval { lo_desc: String, hi_desc: String },

    /// Prime search exhausted its retry budget.
    #[error("prime generation failed after {attempts} attempts")]
    PrimeGeneration { attempts: u64 },

    /// Malformed DIMACS input.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    /// DIMACS clause wider than 3 literals.
    #[error("line {line}: clause of width {width} unsupported (3CNF accepts width 1..=3)")]
    ClauseWidth { line: usize, width: usize },

    /// Boolean assignment length does not match the formula.
    #[error("assignment has {got} bits, formula has {expected} variables")]
    AssignmentLength { expected: usize, got: usize },

    /// Field point dimension does not match the formula.
    #[error("point has {got} coordinates, expected {expected}")]
    PointLength { expected: usize, got: usize },

    /// Two interpolation nodes coincide.
    #[error("duplicate interpolation node")]
    DuplicateNode,

    #[error("encoding: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
