use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("lattice mismatch: {0}")]
    LatticeMismatch(String),
    #[error("malformed graymap: {0}")]
    Graymap(String),
    #[error("image relay maps field content outside the grid (m = {0})")]
    RelayOutOfBounds(f64),
    #[error("correlation mode mismatch: {0}")]
    ModeMismatch(String),
    #[error("need at least {needed} frames, have {have}")]
    TooFewFrames { needed: u64, have: u64 },
    #[error("fixed-point accumulator overflow")]
    AccumulatorOverflow,
    #[error("profile has no resolvable peak above its baseline")]
    NoPeak,
    #[error("profile too short: {0} points")]
    ProfileTooShort(usize),
    #[error("all-zero correlation, visibility undefined")]
    ZeroCorrelation,
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error("worker pool: {0}")]
    WorkerPool(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn require_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite and > 0, got {value}")))
    }
}
