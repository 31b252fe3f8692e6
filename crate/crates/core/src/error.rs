use thiserror::Error;

use crate::geometry::Pose;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("rotation angle too close to pi for a unique logarithm ({angle} rad)")]
    AmbiguousLog { angle: f64 },

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("parse error at line {line}: {message}")]
    ParseLine { line: usize, message: String },

    /// The optimiser produced a non-finite loss. `last` is the last iterate with a finite loss.
    #[error("optimisation diverged at refinement level {level}")]
    Diverged { level: usize, last: Box<Pose> },

    #[error("no valid pixels to evaluate")]
    EmptyValidSet,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
