use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::ServiceError;
use crate::session::{CreateSession, QueryView, StateSnapshot, SubmitFeedback, SubmitOutcome};
use crate::store::SessionStore;

/// Datasets travel inline, so the default body limit is far too small.
const BODY_LIMIT: usize = 512 * 1024 * 1024;

type Shared = Arc<SessionStore>;

pub fn router(store: Shared) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create))
        .route("/sessions/{id}/query", get(next_query))
        .route("/sessions/{id}/feedback", post(submit))
        .route("/sessions/{id}/state", get(state))
        .route("/sessions/{id}/export", get(export))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(store)
}

fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T, ServiceError> {
    serde_json::from_slice(body).map_err(|e| ServiceError::BadRequest(e.to_string()))
}

/// Runs model work off the async executor.
async fn blocking<T, F>(f: F) -> Result<T, ServiceError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ServiceError> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?
}

async fn healthz() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

async fn create(State(store): State<Shared>, body: Bytes) -> Result<Json<QueryView>, ServiceError> {
    let req: CreateSession = parse(&body)?;
    blocking(move || store.create(req)).await.map(Json)
}

#[derive(Deserialize)]
struct QueryParams {
    #[serde(default)]
    gains: bool,
}

async fn next_query(
    State(store): State<Shared>,
    Path(id): Path<String>,
    Query(params): Query<QueryParams>,
) -> Result<Json<QueryView>, ServiceError> {
    blocking(move || store.next_query(&id, params.gains)).await.map(Json)
}

async fn submit(
    State(store): State<Shared>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<SubmitOutcome>, ServiceError> {
    let req: SubmitFeedback = parse(&body)?;
    blocking(move || store.submit(&id, &req)).await.map(Json)
}

async fn state(State(store): State<Shared>, Path(id): Path<String>) -> Result<Json<StateSnapshot>, ServiceError> {
    blocking(move || store.state(&id)).await.map(Json)
}

/// The archive is wrapped in the same versioned envelope as files on disk,
/// so the response body can be saved and replayed as is.
async fn export(State(store): State<Shared>, Path(id): Path<String>) -> Result<Json<Value>, ServiceError> {
    blocking(move || {
        let archive = store.export(&id)?;
        elicit_core::serial::to_value(&archive).map_err(ServiceError::Storage)
    })
    .await
    .map(Json)
}
