use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use seminar_core::Error;
use serde::{Deserialize, Serialize};

/// Wire form of every failure: `{"code": ..., "message": ...}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError(pub Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

pub fn status_of(e: &Error) -> StatusCode {
    match e {
        Error::AuthFailed | Error::Unauthenticated => StatusCode::UNAUTHORIZED,
        Error::Forbidden | Error::AccountDisabled => StatusCode::FORBIDDEN,
        Error::NotFound(_) => StatusCode::NOT_FOUND,
        Error::DuplicateTitle(_)
        | Error::ProposalsClosed
        | Error::InvalidTransition { .. }
        | Error::ThemeFull
        | Error::ChoiceLimitReached
        | Error::AlreadyAssigned
        | Error::ThemeNotSelectable(_)
        | Error::SelectionNotOpen
        | Error::NotAssigned
        | Error::EmailTaken
        | Error::Infeasible { .. }
        | Error::MigrationConflict(_) => StatusCode::CONFLICT,
        Error::FileTooLarge { .. } => StatusCode::PAYLOAD_TOO_LARGE,
        Error::Validation(_)
        | Error::WeekOutOfRange { .. }
        | Error::MissingCapacity
        | Error::EmptyFile
        | Error::WeakPassword(_)
        | Error::InvalidPolicy(_) => StatusCode::UNPROCESSABLE_ENTITY,
        Error::StoreUnavailable(_) | Error::TransactionRetryExhausted(_) => StatusCode::SERVICE_UNAVAILABLE,
        Error::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = status_of(&self.0);
        if status.is_server_error() {
            tracing::warn!(error = %self.0, "request failed");
        }
        let mut body = serde_json::json!({
            "code": self.0.code(),
            "message": self.0.to_string(),
        });
        if let Error::Infeasible { items } = &self.0 {
            body["items"] = serde_json::json!(items);
        }
        (status, Json(body)).into_response()
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
