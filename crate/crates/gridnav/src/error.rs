//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller passed something structurally wrong (bad dimensions, empty
    /// training set, malformed config, out-of-bounds region, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Requested the centroid of an empty region (zero area).
    #[error("no centroid: region has zero area")]
    NoCentroid,

    /// No usable vertical line track; the strategy layer handles recovery.
    #[error("line tracking lost")]
    LostLine,

    /// A filter or tracker reached an impossible internal state.
    #[error("internal state error: {0}")]
    InternalState(String),

    /// Dataset directory is missing frames, ground truth, or a manifest.
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    /// A simulated mission ended without completing its plan.
    #[error("mission failed: {0}")]
    MissionFailed(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
