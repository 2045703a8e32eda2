use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("level {level} out of range 1..={depth}")]
    LevelOutOfRange { level: usize, depth: usize },

    #[error("invalid space: {0}")]
    InvalidSpace(String),

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("the zero vector has no norming functional")]
    ZeroVector,

    #[error("space has non-smooth points; use norming_sup instead of a single functional")]
    NonSmooth,

    #[error("projection onto level {level} annihilates the vector; b_m(x) is undefined")]
    DegenerateSupport { level: usize },

    #[error("vector has support beyond level {level} and is outside the projection domain")]
    OutsideDomain { level: usize },

    #[error("space mismatch: {0}")]
    SpecMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
