//! HTTP session API for interactive dialog-driven image search.
//!
//! Routes (all JSON):
//!
//! - `GET  /v1/healthz`
//! - `GET  /v1/corpora`
//! - `POST /v1/corpora/{name}/sessions` with `{caption, k?, target_id?}`
//! - `POST /v1/sessions/{id}/answers` with `{answer}`
//! - `GET  /v1/sessions/{id}`
//!
//! Errors are `{"error": {"code", "message"}}` with 400/404/409/410/422/503.

pub mod api;
pub mod config;
pub mod error;
pub mod session;

use std::sync::Arc;
use std::time::Duration;

pub use api::router;
pub use config::{ConfigError, ServiceConfig};
pub use error::ServiceError;
pub use session::{CorpusEntry, CreateRequest, ManagerConfig, RoundResponse, SessionManager, SessionView};

/// Serves `manager` on `listener` until the future is dropped, sweeping
/// idle sessions every `sweep_every`.
pub async fn serve(manager: Arc<SessionManager>, listener: tokio::net::TcpListener, sweep_every: Duration) -> std::io::Result<()> {
    let sweeper = Arc::clone(&manager);
    let sweep = tokio::spawn(async move {
        let mut tick = tokio::time::interval(sweep_every);
        loop {
            tick.tick().await;
            let live = sweeper.sweep();
            tracing::debug!(live, "session sweep");
        }
    });
    let result = axum::serve(listener, router(manager)).await;
    sweep.abort();
    result
}
