use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid stream: multiplicity leaves {{0,1}} at update {index}")]
    InvalidStream { index: usize },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// Ball carving ran out of centers before covering the point.
    #[error("point not covered by the first {budget} carving centers")]
    Uncovered { budget: u64 },

    #[error("sketch payload overflow: {0}")]
    Overflow(String),

    #[error("decode error: {0}")]
    Decode(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
