//! Crate error type.

use thiserror::Error;

/// Errors raised by integration, conversion and harness routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A matrix expected to be a rotation failed the orthonormality check.
    #[error("invalid rotation matrix: {0}")]
    InvalidRotation(String),

    /// A measurement sequence was too short or had non-increasing timestamps.
    #[error("invalid measurement sequence: {0}")]
    InvalidSequence(String),

    /// An input contained NaN or infinity.
    #[error("non-finite input: {0}")]
    NonFinite(String),

    /// A conversion Jacobian was too ill-conditioned to invert reliably.
    #[error("numerical conditioning failure: {0}")]
    Conditioning(String),

    /// A residual style was paired with a preintegration convention it is not
    /// derived for.
    #[error("unsupported residual style / convention pairing: {0}")]
    ConventionMismatch(String),

    /// Matrix shapes disagree.
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    /// Configuration file or flag error.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
