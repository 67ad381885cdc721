//! Axum routes over a shared [`Store`].

use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Query, State};
use axum::http::header;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::{Json, Router};
use serde::Deserialize;
use tokio::sync::watch;

use crate::error::ServiceError;
use crate::store::{BatchView, Progress, Store, SubmitOutcome, Submission};

pub type Clock = Arc<dyn Fn() -> u64 + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    })
}

/// Mutations go through the store mutex one at a time; progress reads come
/// from the latest published snapshot without touching it.
#[derive(Clone)]
pub struct AppState {
    store: Arc<Mutex<Store>>,
    progress: watch::Sender<Progress>,
    clock: Clock,
}

impl AppState {
    pub fn new(store: Store, clock: Clock) -> Self {
        let (progress, _) = watch::channel(store.progress());
        AppState {
            store: Arc::new(Mutex::new(store)),
            progress,
            clock,
        }
    }

    fn with_store<T>(&self, f: impl FnOnce(&mut Store, u64) -> Result<T, ServiceError>) -> Result<T, ServiceError> {
        let mut store = self.store.lock().unwrap_or_else(|e| e.into_inner());
        let out = f(&mut store, (self.clock)());
        self.progress.send_replace(store.progress());
        out
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/batch", get(get_batch).post(post_batch))
        .route("/api/progress", get(progress))
        .route("/api/health", get(health))
        .route("/api/dataset", get(dataset))
        .with_state(state)
}

#[derive(Deserialize)]
struct SessionQuery {
    session: String,
}

async fn get_batch(
    State(state): State<AppState>,
    Query(q): Query<SessionQuery>,
) -> Result<Json<BatchView>, ServiceError> {
    state.with_store(|s, now| s.serve_batch(&q.session, now)).map(Json)
}

async fn post_batch(
    State(state): State<AppState>,
    Json(sub): Json<Submission>,
) -> Result<Json<SubmitOutcome>, ServiceError> {
    let out = state.with_store(|s, now| s.submit_batch(&sub, now))?;
    log::info!("session {} batch {}: {:?}", sub.session, sub.batch_id, out.verdict);
    Ok(Json(out))
}

async fn progress(State(state): State<AppState>) -> Json<Progress> {
    Json(state.progress.borrow().clone())
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn dataset(State(state): State<AppState>) -> Result<impl IntoResponse, ServiceError> {
    let body = state.with_store(|s, _| Ok(s.dataset().to_jsonl()))?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body))
}

/// Serves `state` on `addr` until the process is stopped.
pub async fn serve(state: AppState, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
