use std::fmt;

use axum::extract::multipart::{MultipartError, MultipartRejection};
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    NotFound,
    /// Input that does not fit a stored model's feature schema.
    Conflict,
    Internal,
}

/// Error reported by the CLI on stderr and by the API as the response body.
#[derive(Debug, Clone, Serialize)]
pub struct ServiceError {
    #[serde(skip)]
    pub kind: ErrorKind,
    pub code: String,
    pub message: String,
    pub detail: Value,
}

pub type ServiceResult<T> = std::result::Result<T, ServiceError>;

impl ServiceError {
    fn new(kind: ErrorKind, code: &str, message: impl Into<String>) -> Self {
        ServiceError {
            kind,
            code: code.to_string(),
            message: message.into(),
            detail: Value::Null,
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Validation, "validation_error", message)
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        Self::new(ErrorKind::NotFound, "not_found", format!("unknown {what} {id:?}"))
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Conflict, "schema_mismatch", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Internal, "internal_error", message)
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }

    pub fn status(&self) -> StatusCode {
        match self.kind {
            ErrorKind::Validation => StatusCode::BAD_REQUEST,
            ErrorKind::NotFound => StatusCode::NOT_FOUND,
            ErrorKind::Conflict => StatusCode::CONFLICT,
            ErrorKind::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    /// 1 for bad input, 2 for failures during the run.
    pub fn exit_code(&self) -> u8 {
        match self.kind {
            ErrorKind::Validation | ErrorKind::NotFound | ErrorKind::Conflict => 1,
            ErrorKind::Internal => 2,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("error serializes")
    }
}

impl fmt::Display for ServiceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for ServiceError {}

impl From<noshow_core::Error> for ServiceError {
    fn from(e: noshow_core::Error) -> Self {
        use noshow_core::Error as E;
        let message = e.to_string();
        match &e {
            E::Schema(_) | E::Dimension { .. } | E::Encoding { .. } => ServiceError::conflict(message),
            E::Io(io) if io.kind() == std::io::ErrorKind::NotFound => ServiceError::validation(message),
            _ if e.is_validation() => ServiceError::validation(message),
            _ => ServiceError::internal(message),
        }
    }
}

impl From<std::io::Error> for ServiceError {
    fn from(e: std::io::Error) -> Self {
        noshow_core::Error::Io(e).into()
    }
}

impl From<serde_json::Error> for ServiceError {
    fn from(e: serde_json::Error) -> Self {
        ServiceError::validation(format!("JSON error: {e}"))
    }
}

impl From<JsonRejection> for ServiceError {
    fn from(r: JsonRejection) -> Self {
        ServiceError::validation(r.body_text())
    }
}

impl From<QueryRejection> for ServiceError {
    fn from(r: QueryRejection) -> Self {
        ServiceError::validation(r.body_text())
    }
}

impl From<MultipartError> for ServiceError {
    fn from(r: MultipartError) -> Self {
        ServiceError::validation(r.body_text())
    }
}

impl From<MultipartRejection> for ServiceError {
    fn from(r: MultipartRejection) -> Self {
        ServiceError::validation(r.body_text())
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        if self.kind == ErrorKind::Internal {
            log::error!("{self}");
        }
        (self.status(), Json(self)).into_response()
    }
}
