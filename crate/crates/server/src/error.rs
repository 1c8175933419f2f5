use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use gazereview_core::{Error, FieldError};
use serde::Serialize;

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: &'static str,
    message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    fields: Vec<FieldError>,
}

/// Maps library errors onto HTTP statuses.
#[derive(Debug)]
pub struct ApiError(pub Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError(Error::invalid("body", r.body_text()))
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        ApiError(Error::invalid("query", r.body_text()))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let message = self.0.to_string();
        let (status, kind, fields) = match self.0 {
            Error::NotFound(_) => (StatusCode::NOT_FOUND, "not_found", Vec::new()),
            Error::Validation(fields) => (StatusCode::UNPROCESSABLE_ENTITY, "validation", fields),
            Error::Domain(msg) => (
                StatusCode::UNPROCESSABLE_ENTITY,
                "validation",
                vec![FieldError::new("body", msg)],
            ),
            Error::Parse { line, message } => (
                StatusCode::UNPROCESSABLE_ENTITY,
                "validation",
                vec![FieldError::new(format!("line {line}"), message)],
            ),
            Error::Conflict { .. } => (StatusCode::CONFLICT, "conflict", Vec::new()),
            Error::AlreadyExists(_) => (StatusCode::CONFLICT, "conflict", Vec::new()),
            Error::Corrupt { .. } | Error::Io(_) | Error::Json(_) => {
                tracing::error!(%message, "store failure");
                (StatusCode::INTERNAL_SERVER_ERROR, "internal", Vec::new())
            }
        };
        (
            status,
            Json(ErrorBody {
                error: kind,
                message,
                fields,
            }),
        )
            .into_response()
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
