//! API errors and their HTTP status codes.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use pollaudit_core::AuditError;
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("{0}")]
    BadRequest(String),
    #[error("contest {0} not found")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Gone(String),
    #[error("{0}")]
    Unprocessable(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::Gone(_) => StatusCode::GONE,
            ApiError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl From<AuditError> for ApiError {
    fn from(e: AuditError) -> Self {
        let msg = e.to_string();
        match e {
            AuditError::Domain(_)
            | AuditError::InvalidConfig(_)
            | AuditError::MalformedRound(_)
            | AuditError::Json(_) => ApiError::BadRequest(msg),
            AuditError::CalibrationInfeasible(_)
            | AuditError::Unsupported(_)
            | AuditError::NonMonotone { .. }
            | AuditError::NotANumber { .. }
            | AuditError::Quadrature(_) => ApiError::Unprocessable(msg),
            AuditError::SessionClosed { .. } => ApiError::Gone(msg),
            AuditError::ReplayMismatch { .. } | AuditError::Io(_) => ApiError::Internal(msg),
        }
    }
}

impl From<std::io::Error> for ApiError {
    fn from(e: std::io::Error) -> Self {
        ApiError::Internal(e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            tracing::error!("{self}");
        }
        (
            status,
            Json(json!({ "error": { "status": status.as_u16(), "message": self.to_string() } })),
        )
            .into_response()
    }
}
