//! HTTP/JSON service: bearer-token sessions, role-guarded endpoints and
//! multipart uploads over the seminar store.
//!
//! Handlers keep no state of their own. Every check-then-act step runs as a
//! store transaction on the blocking pool, so concurrent requests contend
//! only inside SQLite.

mod auth;
mod error;
pub mod openapi;
mod routes;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::Router;
use seminar_core::persistence::DEFAULT_SESSION_TTL;
use seminar_core::{ops, PasswordHasher, Store};
use tokio::net::TcpListener;

pub use auth::Caller;
pub use error::{status_of, ApiError, ApiResult, ErrorBody};
pub use routes::{FileReview, LoginRequest, LoginResponse, ScheduleBoard, ScheduleRow};

pub const DEFAULT_BIND: &str = "127.0.0.1:8080";

/// `SEMINAR_BIND`, or the default address.
pub fn bind_addr_from_env() -> String {
    std::env::var("SEMINAR_BIND").unwrap_or_else(|_| DEFAULT_BIND.to_string())
}

#[derive(Debug, Clone)]
pub struct ApiConfig {
    pub max_file_bytes: u64,
    pub session_ttl: Duration,
    /// Hide who holds which theme from students.
    pub anonymize_assignees: bool,
    /// Directory of the browser UI bundle, served at `/`.
    pub static_dir: Option<PathBuf>,
}

impl Default for ApiConfig {
    fn default() -> Self {
        ApiConfig {
            max_file_bytes: ops::DEFAULT_MAX_FILE_BYTES,
            session_ttl: DEFAULT_SESSION_TTL,
            anonymize_assignees: false,
            static_dir: None,
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    store: Store,
    hasher: PasswordHasher,
    config: ApiConfig,
}

impl AppState {
    pub fn new(store: Store, hasher: PasswordHasher, config: ApiConfig) -> Self {
        AppState {
            inner: Arc::new(Inner { store, hasher, config }),
        }
    }

    pub fn store(&self) -> &Store {
        &self.inner.store
    }

    pub fn hasher(&self) -> &PasswordHasher {
        &self.inner.hasher
    }

    pub fn config(&self) -> &ApiConfig {
        &self.inner.config
    }
}

pub fn router(state: AppState) -> Router {
    let static_dir = state.config().static_dir.clone();
    let app = routes::api_routes(state);
    match static_dir {
        Some(dir) => app.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => app,
    }
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    state: AppState,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}
