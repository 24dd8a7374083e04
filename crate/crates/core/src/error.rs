use thiserror::Error;

/// Errors raised by the audit engine.
#[derive(Debug, Error)]
pub enum AuditError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("statistic is not monotone in the winner count at n={n}, Y={winners}")]
    NonMonotone { n: u64, winners: u64 },

    #[error("statistic evaluated to NaN at n={n}, Y={winners}")]
    NotANumber { n: u64, winners: u64 },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("calibration infeasible: {0}")]
    CalibrationInfeasible(String),

    #[error("session is {status}; no further rounds accepted")]
    SessionClosed { status: String },

    #[error("malformed round: {0}")]
    MalformedRound(String),

    #[error("replay mismatch at round {round}: {detail}")]
    ReplayMismatch { round: u64, detail: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, AuditError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(AuditError::Domain(msg.into()))
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(AuditError::InvalidConfig(msg.into()))
}
