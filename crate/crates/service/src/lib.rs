//! HTTP annotation service: assigns clips to qualified annotators, serves
//! their audio and appends judgments to an annotation log that the
//! aggregation stage reads as manifest annotation records.
//!
//! Routes:
//!
//! ```text
//! GET  /api/clips/next?annotator=ID          200 {clip_id, audio_url} | 204 | 403
//! GET  /api/audio/{clip_id}                  200 audio/wav
//! POST /api/annotations                      201 | 400 | 403 | 404 | 409
//! GET  /api/qualification/next?annotator=ID  200 {qualified, clip_id, audio_url, attempt, progress}
//! POST /api/qualification/answer             200 {correct, progress, qualified, retry}
//! GET  /api/progress                         200 {total_clips, fully_annotated, annotations_total, per_class_counts}
//! ```

pub mod state;
pub mod store;

use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;
use thiserror::Error;
use tokio::net::TcpListener;

pub use state::{
    AnnotatorSession, NextClip, Progress, QualificationAnswer, QualificationNext, QualificationProgress,
    ServiceConfig, ServiceState,
};
pub use store::{read_log, AnnotationLog};

pub const SECRET_HEADER: &str = "x-voclab-key";

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("annotation store: {0}")]
    Store(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("annotator `{0}` has not passed qualification; start at /api/qualification/next?annotator={0}")]
    Unqualified(String),
    #[error("annotator `{annotator_id}` already labelled clip `{clip_id}`")]
    Duplicate { annotator_id: String, clip_id: String },
    #[error("unknown clip `{0}`")]
    UnknownClip(String),
    #[error("invalid label `{0}`; expected one of crying, laughing, canonical, non_canonical, junk")]
    InvalidLabel(String),
    #[error("clip `{0}` is not a qualification clip")]
    NotGold(String),
    #[error("clip `{0}` is not part of the current qualification sample")]
    NotInSample(String),
    #[error("qualification clip `{0}` already answered")]
    AlreadyAnswered(String),
    #[error("annotator `{0}` is already qualified")]
    AlreadyQualified(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("missing or wrong shared secret")]
    Unauthorized,
    #[error("audio for `{0}` is unavailable")]
    AudioMissing(String),
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::Unqualified(_) => StatusCode::FORBIDDEN,
            ApiError::Duplicate { .. } | ApiError::AlreadyAnswered(_) | ApiError::AlreadyQualified(_) => {
                StatusCode::CONFLICT
            }
            ApiError::UnknownClip(_) | ApiError::AudioMissing(_) => StatusCode::NOT_FOUND,
            ApiError::InvalidLabel(_) | ApiError::NotGold(_) | ApiError::NotInSample(_) | ApiError::BadRequest(_) => {
                StatusCode::BAD_REQUEST
            }
            ApiError::Unauthorized => StatusCode::UNAUTHORIZED,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if let ApiError::Internal(msg) = &self {
            tracing::error!("{msg}");
        }
        let mut body = json!({ "error": self.to_string() });
        if let ApiError::Unqualified(id) = &self {
            body["qualification_url"] = format!("/api/qualification/next?annotator={id}").into();
        }
        (self.status(), Json(body)).into_response()
    }
}

pub type SharedState = Arc<Mutex<ServiceState>>;

/// Runs `f` on the state from a blocking thread: submissions sync the store
/// to disk before the lock is released.
async fn with_state<T, F>(state: &SharedState, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&mut ServiceState) -> Result<T, ApiError> + Send + 'static,
{
    let state = state.clone();
    tokio::task::spawn_blocking(move || {
        let mut guard = state.lock().unwrap_or_else(|p| p.into_inner());
        f(&mut guard)
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))?
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(format!("invalid body: {e}")))
}

#[derive(Deserialize)]
struct AnnotatorQuery {
    annotator: Option<String>,
}

impl AnnotatorQuery {
    fn id(self) -> Result<String, ApiError> {
        self.annotator
            .filter(|a| !a.is_empty())
            .ok_or_else(|| ApiError::BadRequest("missing `annotator` query parameter".into()))
    }
}

#[derive(Deserialize)]
struct Judgment {
    annotator_id: String,
    clip_id: String,
    label: String,
}

async fn next_clip(State(s): State<SharedState>, Query(q): Query<AnnotatorQuery>) -> Result<Response, ApiError> {
    let id = q.id()?;
    match with_state(&s, move |st| st.next_clip(&id)).await? {
        Some(c) => Ok(Json(c).into_response()),
        None => Ok(StatusCode::NO_CONTENT.into_response()),
    }
}

async fn submit(State(s): State<SharedState>, body: Bytes) -> Result<Response, ApiError> {
    let j: Judgment = parse_body(&body)?;
    let a = with_state(&s, move |st| st.submit(&j.annotator_id, &j.clip_id, &j.label)).await?;
    Ok((StatusCode::CREATED, Json(a)).into_response())
}

async fn audio(State(s): State<SharedState>, Path(clip_id): Path<String>) -> Result<Response, ApiError> {
    let id = clip_id.clone();
    let path = with_state(&s, move |st| st.audio_path(&id)).await?;
    let bytes = tokio::fs::read(&path).await.map_err(|e| {
        tracing::warn!("audio {}: {e}", path.display());
        ApiError::AudioMissing(clip_id)
    })?;
    Ok(([(header::CONTENT_TYPE, "audio/wav")], bytes).into_response())
}

async fn qualification_next(
    State(s): State<SharedState>,
    Query(q): Query<AnnotatorQuery>,
) -> Result<Json<QualificationNext>, ApiError> {
    let id = q.id()?;
    Ok(Json(with_state(&s, move |st| st.qualification_next(&id)).await?))
}

async fn qualification_answer(
    State(s): State<SharedState>,
    body: Bytes,
) -> Result<Json<QualificationAnswer>, ApiError> {
    let j: Judgment = parse_body(&body)?;
    Ok(Json(
        with_state(&s, move |st| st.qualification_answer(&j.annotator_id, &j.clip_id, &j.label)).await?,
    ))
}

async fn progress(State(s): State<SharedState>) -> Result<Json<Progress>, ApiError> {
    Ok(Json(with_state(&s, |st| Ok(st.progress())).await?))
}

async fn check_secret(
    State(secret): State<Option<Arc<str>>>,
    headers: HeaderMap,
    req: Request,
    next: Next,
) -> Response {
    if let Some(secret) = secret {
        let ok = headers
            .get(SECRET_HEADER)
            .and_then(|v| v.to_str().ok())
            .is_some_and(|v| v == &*secret);
        if !ok {
            return ApiError::Unauthorized.into_response();
        }
    }
    next.run(req).await
}

pub fn router(state: ServiceState) -> Router {
    let secret: Option<Arc<str>> = state.config().shared_secret.as_deref().map(Arc::from);
    let shared: SharedState = Arc::new(Mutex::new(state));
    Router::new()
        .route("/api/clips/next", get(next_clip))
        .route("/api/annotations", post(submit))
        .route("/api/audio/{clip_id}", get(audio))
        .route("/api/qualification/next", get(qualification_next))
        .route("/api/qualification/answer", post(qualification_answer))
        .route("/api/progress", get(progress))
        .with_state(shared)
        .layer(middleware::from_fn_with_state(secret, check_secret))
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    state: ServiceState,
    listener: TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}
