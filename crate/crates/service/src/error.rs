use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("session {0} has no active batch")]
    UnknownSession(String),

    #[error("partial batch: {0}")]
    PartialBatch(String),

    #[error("only {available} pairs are open for this session, a batch needs {needed}")]
    InsufficientPairs { available: usize, needed: usize },

    #[error("invalid request: {0}")]
    InvalidRequest(String),

    #[error("storage failure: {0}")]
    Io(String),

    #[error(transparent)]
    Core(#[from] layoutrank::Error),
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::UnknownSession(_) => StatusCode::NOT_FOUND,
            ServiceError::PartialBatch(_) | ServiceError::InvalidRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::InsufficientPairs { .. } => StatusCode::CONFLICT,
            ServiceError::Io(_) | ServiceError::Core(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": self.to_string() });
        (self.status(), Json(body)).into_response()
    }
}
