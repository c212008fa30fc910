//! HTTP interface for the annotation UI.
//!
//! | method | path                          | body / query                          |
//! |--------|-------------------------------|---------------------------------------|
//! | POST   | `/sessions`                   | `{runs, manifest, seed, id?}`         |
//! | GET    | `/sessions/{id}/next`         | `?rater=`                             |
//! | POST   | `/ratings`                    | `{session_id, rater, item_key, fluency, adequacy}` |
//! | POST   | `/sessions/{id}/finalize`     |                                       |
//! | GET    | `/sessions/{id}/export`       |                                       |
//!
//! Errors come back as `{"error": code, "message": text}`.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

use cascade_eval::corpus::load_manifest;

use crate::session::{Ack, FinalizedExport, NextItem};
use crate::{runs_from_dirs, AnnotateError, SessionStore};

impl AnnotateError {
    fn code(&self) -> &'static str {
        match self {
            AnnotateError::UnknownSession(_) => "unknown_session",
            AnnotateError::UnknownItem(_) => "unknown_item",
            AnnotateError::OutOfRange { .. } => "out_of_range",
            AnnotateError::Duplicate { .. } => "duplicate",
            AnnotateError::SessionFinalized(_) => "session_finalized",
            AnnotateError::NotFinalized(_) => "not_finalized",
            AnnotateError::CoverageMismatch(_) => "coverage_mismatch",
            AnnotateError::SessionExists(_) => "session_exists",
            AnnotateError::InvalidRequest(_) => "invalid_request",
            AnnotateError::Agreement(_) => "agreement",
            AnnotateError::Scenario(_) | AnnotateError::Corpus(_) => "bad_input",
            AnnotateError::CorruptLog { .. } | AnnotateError::Io(_) => "io",
        }
    }

    fn status(&self) -> StatusCode {
        match self {
            AnnotateError::UnknownSession(_) | AnnotateError::UnknownItem(_) => StatusCode::NOT_FOUND,
            AnnotateError::OutOfRange { .. }
            | AnnotateError::InvalidRequest(_)
            | AnnotateError::CoverageMismatch(_)
            | AnnotateError::Scenario(_)
            | AnnotateError::Corpus(_) => StatusCode::BAD_REQUEST,
            AnnotateError::Duplicate { .. }
            | AnnotateError::SessionFinalized(_)
            | AnnotateError::NotFinalized(_)
            | AnnotateError::SessionExists(_)
            | AnnotateError::Agreement(_) => StatusCode::CONFLICT,
            AnnotateError::CorruptLog { .. } | AnnotateError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for AnnotateError {
    fn into_response(self) -> Response {
        let body = json!({ "error": self.code(), "message": self.to_string() });
        (self.status(), Json(body)).into_response()
    }
}

#[derive(Debug, Deserialize)]
pub struct CreateSession {
    pub runs: Vec<PathBuf>,
    pub manifest: PathBuf,
    pub seed: u64,
    #[serde(default)]
    pub id: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub session_id: String,
    pub n_items: usize,
}

#[derive(Debug, Deserialize)]
struct NextQuery {
    rater: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SubmitRating {
    pub session_id: String,
    pub rater: String,
    pub item_key: String,
    // wide integers so out-of-range values reach validation instead of failing to parse
    pub fluency: i64,
    pub adequacy: i64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Acked {
    pub ack: Ack,
}

type Shared = Arc<SessionStore>;

async fn create(State(store): State<Shared>, Json(req): Json<CreateSession>) -> Result<impl IntoResponse, AnnotateError> {
    let runs = runs_from_dirs(&req.runs)?;
    let manifest = load_manifest(&req.manifest)?;
    let (session_id, n_items) = store.create(req.id.as_deref(), &runs, &manifest, req.seed)?;
    Ok((StatusCode::CREATED, Json(Created { session_id, n_items })))
}

async fn next(
    State(store): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<NextQuery>,
) -> Result<Json<NextItem>, AnnotateError> {
    store.next_item(&id, &q.rater).map(Json)
}

async fn rate(State(store): State<Shared>, Json(req): Json<SubmitRating>) -> Result<Json<Acked>, AnnotateError> {
    let ack = store.submit(&req.session_id, &req.rater, &req.item_key, req.fluency, req.adequacy)?;
    Ok(Json(Acked { ack }))
}

async fn finalize(State(store): State<Shared>, Path(id): Path<String>) -> Result<Json<FinalizedExport>, AnnotateError> {
    store.finalize(&id).map(Json)
}

async fn export(State(store): State<Shared>, Path(id): Path<String>) -> Result<Json<FinalizedExport>, AnnotateError> {
    store.export(&id).map(Json)
}

/// Build the router; `ui_dir`, when given, is served for every other path.
pub fn router(store: Shared, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}/next", get(next))
        .route("/ratings", post(rate))
        .route("/sessions/{id}/finalize", post(finalize))
        .route("/sessions/{id}/export", get(export))
        .with_state(store);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serve until ctrl-c.
pub async fn serve(addr: SocketAddr, store: Shared, ui_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(store, ui_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
