//! Crate-wide error type.

use thiserror::Error;

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: bad dimensions, empty inputs, out-of-range knobs.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A class does not have enough samples to satisfy a partition or
    /// auxiliary reservation request.
    #[error("class {class}: requested {requested} samples but only {available} available")]
    Capacity {
        class: usize,
        requested: usize,
        available: usize,
    },

    /// IDX file does not start with the expected magic number.
    #[error("{path}: bad IDX magic 0x{found:08x}, expected 0x{expected:08x}")]
    IdxMagic {
        path: String,
        found: u32,
        expected: u32,
    },

    /// IDX file ended before the header-declared payload.
    #[error("{path}: truncated IDX file ({context})")]
    IdxTruncated { path: String, context: String },

    /// Image and label IDX files disagree on the item count.
    #[error("IDX count mismatch: {images} images vs {labels} labels")]
    IdxCountMismatch { images: usize, labels: usize },

    /// Every class block of a gradient change failed the positivity test,
    /// e.g. because the local model equals the global one.
    #[error("degenerate update: no class shows a positive gradient change")]
    DegenerateUpdate,

    /// All scalar factors hit zero, so the composition cannot be normalized.
    #[error("degenerate decomposition: all scalar factors are zero")]
    DegenerateDecomposition,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
