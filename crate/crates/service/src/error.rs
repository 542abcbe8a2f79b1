use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use serde_json::{json, Value};

use displaylab::Error as CoreError;

/// Error body shared by every endpoint: `{code, message, details}`.
#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub code: &'static str,
    pub message: String,
    pub details: Value,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, body: ErrorBody { code, message: message.into(), details: Value::Null } }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.body.details = details;
        self
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("{what} {id:?} not found"))
            .with_details(json!({ "id": id }))
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<CoreError> for ApiError {
    fn from(err: CoreError) -> Self {
        let message = err.to_string();
        match err {
            CoreError::LabelMismatch { missing, unexpected } => {
                ApiError::new(StatusCode::CONFLICT, "label_mismatch", message)
                    .with_details(json!({ "missing": missing, "unexpected": unexpected }))
            }
            CoreError::Finished => ApiError::new(StatusCode::GONE, "session_finished", message),
            CoreError::Exhausted => ApiError::new(StatusCode::CONFLICT, "pool_exhausted", message),
            CoreError::UnknownId(id) => {
                ApiError::new(StatusCode::CONFLICT, "unknown_id", message).with_details(json!({ "id": id }))
            }
            CoreError::Format { location, .. } => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_dataset", message)
                    .with_details(json!({ "location": location }))
            }
            CoreError::Csv(_) | CoreError::Load { .. } => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_dataset", message)
            }
            CoreError::Validation(_)
            | CoreError::Domain(_)
            | CoreError::DuplicateId(_)
            | CoreError::OracleUnavailable(_) => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "validation_error", message)
            }
            CoreError::Io(_) | CoreError::Json(_) => ApiError::internal(message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}
