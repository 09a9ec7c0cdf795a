use std::io;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied parameter is out of its valid domain.
    #[error("invalid parameter `{field}`: {reason}")]
    Param { field: &'static str, reason: String },

    /// Array shapes do not line up (wrong grid, patch, or channel count).
    #[error("structural mismatch: {0}")]
    Structure(String),

    /// A weight vector collapsed to zero and cannot be normalized.
    #[error("degenerate weight vector (zero norm)")]
    DegenerateWeights,

    /// Malformed file contents. `offset` is the byte position where parsing failed.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    /// A symmetry score was requested for an image with no object pixels.
    #[error("symmetry score undefined: image has no object pixels")]
    UndefinedScore,

    /// A generator could not hit its symmetry target within its attempt budget.
    #[error("generation failed: {0}")]
    Generation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Param { field, reason: reason.into() }
    }

    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format { offset, message: message.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
