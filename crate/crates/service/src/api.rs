//! HTTP routes over a [`SessionManager`].

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::ServiceError;
use crate::session::{CorpusInfo, CreateRequest, RoundResponse, SessionManager, SessionView};

#[derive(Debug, Deserialize)]
pub struct AnswerRequest {
    pub answer: String,
}

pub fn router(manager: Arc<SessionManager>) -> Router {
    Router::new()
        .route("/v1/healthz", get(healthz))
        .route("/v1/corpora", get(corpora))
        .route("/v1/corpora/{name}/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/answers", post(submit_answer))
        .with_state(manager)
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ServiceError> {
    payload.map(|Json(v)| v).map_err(|e| ServiceError::bad_request(e.body_text()))
}

/// Backends block, so every manager call runs on the blocking pool.
async fn blocking<T, F>(f: F) -> Result<T, ServiceError>
where
    F: FnOnce() -> Result<T, ServiceError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f).await.map_err(|e| ServiceError::internal(format!("worker panicked: {e}")))?
}

async fn healthz() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

async fn corpora(State(m): State<Arc<SessionManager>>) -> Json<Vec<CorpusInfo>> {
    Json(m.corpora())
}

async fn create_session(
    State(m): State<Arc<SessionManager>>,
    Path(name): Path<String>,
    payload: Result<Json<CreateRequest>, JsonRejection>,
) -> Result<Json<RoundResponse>, ServiceError> {
    let req = body(payload)?;
    blocking(move || m.create_session(&name, req)).await.map(Json)
}

async fn submit_answer(
    State(m): State<Arc<SessionManager>>,
    Path(id): Path<String>,
    payload: Result<Json<AnswerRequest>, JsonRejection>,
) -> Result<Json<RoundResponse>, ServiceError> {
    let req = body(payload)?;
    blocking(move || m.submit_answer(&id, &req.answer)).await.map(Json)
}

async fn get_session(State(m): State<Arc<SessionManager>>, Path(id): Path<String>) -> Result<Json<SessionView>, ServiceError> {
    blocking(move || m.get_session(&id)).await.map(Json)
}
