use axum::extract::FromRequestParts;
use axum::http::header::AUTHORIZATION;
use axum::http::request::Parts;
use chrono::Utc;
use seminar_core::persistence::TokenSession;
use seminar_core::{Error, Session};

use crate::error::ApiError;
use crate::routes::blocking;
use crate::AppState;

/// The authenticated caller, resolved from `Authorization: Bearer <token>`.
#[derive(Debug, Clone)]
pub struct Caller(pub TokenSession);

impl Caller {
    pub fn session(&self) -> &Session {
        &self.0.session
    }
}

fn bearer(parts: &Parts) -> Option<String> {
    let value = parts.headers.get(AUTHORIZATION)?.to_str().ok()?;
    let (scheme, token) = value.split_once(' ')?;
    let token = token.trim();
    (scheme.eq_ignore_ascii_case("bearer") && !token.is_empty()).then(|| token.to_string())
}

impl FromRequestParts<AppState> for Caller {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, ApiError> {
        let token = bearer(parts).ok_or(Error::Unauthenticated)?;
        let store = state.store().clone();
        blocking(move || store.resolve_token(&token, Utc::now()))
            .await
            .map(Caller)
    }
}
