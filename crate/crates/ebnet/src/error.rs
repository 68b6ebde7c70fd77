//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by tensor ops, the layer graph, parsers, loaders and the
/// checkpoint machinery.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A tensor shape is empty or inconsistent with its buffer.
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    /// Convolution geometry violated (channel/group mismatch, bad stride, ...).
    #[error("geometry error: {0}")]
    Geometry(String),

    /// A requested range exceeds the packed capacity of a bit row.
    #[error("range error: {0}")]
    Range(String),

    /// Architecture string could not be parsed; `pos` is the byte offset of
    /// the first offending character.
    #[error("parse error at position {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    /// A structurally valid configuration violates an invariant
    /// (divisibility, budget, ...).
    #[error("config error: {0}")]
    Config(String),

    /// On-disk data is malformed; offset is in bytes where known.
    #[error("format error in {path}: {msg} (offset {offset})")]
    Format {
        path: PathBuf,
        offset: u64,
        msg: String,
    },

    /// Checkpoint version or architecture mismatch.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Search budget admits no candidates.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// An API contract was violated by the caller (e.g. backward without a
    /// cached forward).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Training aborted on non-finite values.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code convention: 2 usage/parse, 3 infeasible,
    /// 4 data/format, 1 everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Config(_) => 2,
            Error::Infeasible(_) => 3,
            Error::Format { .. } | Error::Checkpoint(_) | Error::Io(_) => 4,
            _ => 1,
        }
    }
}
