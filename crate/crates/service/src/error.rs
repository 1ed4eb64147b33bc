use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use hara_core::{ErrorCategory, HaraError};
use serde_json::{json, Value};

/// Uniform error body: `{code, message, details}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: String,
    pub message: String,
    pub details: Value,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self { status, code: code.into(), message: message.into(), details: Value::Null }
    }

    pub fn unknown_project(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "UnknownProject", format!("no project `{id}`"))
    }
}

pub fn status_for(category: ErrorCategory) -> StatusCode {
    match category {
        ErrorCategory::Gate => StatusCode::CONFLICT,
        ErrorCategory::UnknownEntity => StatusCode::NOT_FOUND,
        ErrorCategory::Input => StatusCode::BAD_REQUEST,
        ErrorCategory::Invalid | ErrorCategory::Config => StatusCode::UNPROCESSABLE_ENTITY,
        ErrorCategory::Backend => StatusCode::BAD_GATEWAY,
        ErrorCategory::Integrity | ErrorCategory::Io => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

fn details(e: &HaraError) -> Value {
    match e {
        HaraError::ValidationFailed(report) => json!({ "findings": report.findings }),
        HaraError::PendingReviews { count } => json!({ "count": count }),
        HaraError::StageHasPendingReviews { stage, count } => json!({ "stage": stage, "count": count }),
        HaraError::ParseError { offset, .. } => json!({ "offset": offset }),
        HaraError::SchemaError { path, .. } => json!({ "path": path }),
        HaraError::CorruptAudit { seq } => json!({ "seq": seq }),
        HaraError::BackendUnavailable { attempts, .. } => json!({ "attempts": attempts }),
        HaraError::UnratedHazard(ids) => json!({ "hazard_ids": ids }),
        HaraError::InvalidReopen { current, target } => json!({ "current": current, "target": target }),
        _ => Value::Null,
    }
}

impl From<HaraError> for ApiError {
    fn from(e: HaraError) -> Self {
        Self { status: status_for(e.category()), code: e.code().into(), message: e.to_string(), details: details(&e) }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            log::error!("{}: {}", self.code, self.message);
        }
        let body = json!({ "code": self.code, "message": self.message, "details": self.details });
        (self.status, Json(body)).into_response()
    }
}

/// Maps a request-body decoding failure onto the ingest error codes.
pub fn body_error(e: serde_json::Error) -> ApiError {
    use serde_json::error::Category;
    let code = match e.classify() {
        Category::Data => "SchemaError",
        _ => "ParseError",
    };
    ApiError::new(StatusCode::BAD_REQUEST, code, e.to_string())
}
