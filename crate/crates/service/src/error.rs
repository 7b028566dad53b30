use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use elicit_core::Error as CoreError;
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("session `{0}` not found")]
    NotFound(String),

    #[error("stale revision {submitted}, session is at revision {current}")]
    Conflict { submitted: u64, current: u64 },

    #[error("feedback rejected: {0}")]
    Rejected(String),

    #[error("invalid request body: {0}")]
    BadRequest(String),

    #[error(transparent)]
    Invalid(CoreError),

    #[error("model fit failed: {0}")]
    Engine(CoreError),

    #[error("storage failure: {0}")]
    Storage(CoreError),

    #[error("worker task failed: {0}")]
    Internal(String),
}

impl ServiceError {
    /// Sorts an engine error into caller mistakes and server-side failures.
    pub(crate) fn from_core(err: CoreError) -> Self {
        match err {
            CoreError::InvalidHyperparameter { .. }
            | CoreError::InvalidConfig { .. }
            | CoreError::InvalidDataset(_)
            | CoreError::Shape(_)
            | CoreError::FeatureIndex { .. }
            | CoreError::InvalidFeedback(_)
            | CoreError::DuplicateFeedback { .. } => Self::Invalid(err),
            other => Self::Engine(other),
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            Self::NotFound(_) => StatusCode::NOT_FOUND,
            Self::Conflict { .. } => StatusCode::CONFLICT,
            Self::Rejected(_) | Self::Invalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
            Self::BadRequest(_) => StatusCode::BAD_REQUEST,
            Self::Engine(_) | Self::Storage(_) | Self::Internal(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        }
    }

    fn code(&self) -> &'static str {
        match self {
            Self::NotFound(_) => "not_found",
            Self::Conflict { .. } => "conflict",
            Self::Rejected(_) => "rejected",
            Self::BadRequest(_) => "bad_request",
            Self::Invalid(_) => "invalid",
            Self::Engine(_) => "engine_failure",
            Self::Storage(_) => "storage_failure",
            Self::Internal(_) => "internal",
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.code(), "message": self.to_string() });
        if let Self::Conflict { current, .. } = self {
            body["current_revision"] = json!(current);
        }
        (self.status(), Json(body)).into_response()
    }
}
