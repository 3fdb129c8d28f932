use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use serde_json::Value;

use gacm_core::engine::EngineError;

/// Error envelope shared by every route: `{code, message, details}`.
#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub details: Value,
}

#[derive(Serialize)]
struct Envelope<'a> {
    code: &'a str,
    message: &'a str,
    details: &'a Value,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into(), details: Value::Null }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = details;
        self
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        match &e {
            EngineError::BudgetExhausted { budget, last_fired } => {
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "budget_exhausted", e.to_string())
                    .with_details(serde_json::json!({ "budget": budget, "lastFired": last_fired }))
            }
            EngineError::InvalidCustomFact { index, error } => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_custom_facts", "custom fact validation failed")
                    .with_details(serde_json::json!([{ "index": index, "message": error.to_string() }]))
            }
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "engine_error", e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Envelope { code: self.code, message: &self.message, details: &self.details };
        (self.status, Json(body)).into_response()
    }
}
