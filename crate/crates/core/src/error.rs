use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("nodes {0} and {1} are co-located (zero distance)")]
    ZeroDistance(usize, usize),

    #[error("UAV {uav} at step {t} lies outside the normalization range on axis {axis} (normalized {value})")]
    NormalizationOverflow {
        t: usize,
        uav: usize,
        axis: usize,
        value: f64,
    },

    #[error("sequence too short: need {needed}, have {have} ({context})")]
    TooShort {
        context: &'static str,
        needed: usize,
        have: usize,
    },

    #[error("unsupported file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("non-finite state encountered: {0}")]
    NonFinite(String),

    #[error("malformed file: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParam(msg.into())
}
