//! HTTP + JSON interface over an annotation session store.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use lexanalogy::annotation::{
    AnalogyDecision, AnnotationError, AnnotationTask, Decision, SessionStore, TaskId, Verdict,
    WordDecision,
};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

pub type SharedStore = Arc<Mutex<SessionStore>>;

pub fn router(store: SharedStore, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/session", get(session))
        .route("/api/tasks/next", get(next_task))
        .route("/api/tasks/{id}/verdict", post(submit))
        .route("/api/agreement", get(agreement))
        .route("/api/export", get(export))
        .with_state(store);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

fn lock(store: &SharedStore) -> MutexGuard<'_, SessionStore> {
    // A panic while holding the lock cannot leave the store half-written:
    // the log append happens before the in-memory update.
    store.lock().unwrap_or_else(|e| e.into_inner())
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

impl From<AnnotationError> for ApiError {
    fn from(e: AnnotationError) -> Self {
        let status = match e {
            AnnotationError::UnknownTask(_) | AnnotationError::UnknownAnnotator(_) => {
                StatusCode::NOT_FOUND
            }
            AnnotationError::DecisionMismatch(_) | AnnotationError::UnknownWord { .. } => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

async fn session(State(store): State<SharedStore>) -> impl IntoResponse {
    Json(lock(&store).session().summary())
}

#[derive(Deserialize)]
struct NextQuery {
    annotator: String,
}

#[derive(Serialize)]
struct NextTask<'a> {
    task: &'a AnnotationTask,
    remaining: usize,
}

async fn next_task(
    State(store): State<SharedStore>,
    Query(q): Query<NextQuery>,
) -> Result<Response, ApiError> {
    let store = lock(&store);
    let session = store.session();
    let Some(task) = session.next_task(&q.annotator)? else {
        return Ok(StatusCode::NO_CONTENT.into_response());
    };
    let remaining = session
        .queue(&q.annotator)
        .map(|ids| ids.iter().filter(|id| session.verdict(id, &q.annotator).is_none()).count())
        .unwrap_or(0);
    Ok(Json(NextTask { task, remaining }).into_response())
}

/// Either `decision` for a concept-analogy task or `words` for a synset
/// task.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VerdictBody {
    annotator: String,
    decision: Option<AnalogyDecision>,
    words: Option<BTreeMap<String, WordDecision>>,
}

#[derive(Serialize)]
struct Accepted {
    task_id: TaskId,
    ack: lexanalogy::annotation::Ack,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

async fn submit(
    State(store): State<SharedStore>,
    Path(id): Path<String>,
    Json(body): Json<VerdictBody>,
) -> Result<Json<Accepted>, ApiError> {
    let decision = match (body.decision, body.words) {
        (Some(d), None) => Decision::Analogy(d),
        (None, Some(w)) => Decision::Synset(w),
        _ => {
            return Err(ApiError(
                StatusCode::BAD_REQUEST,
                "give exactly one of `decision` or `words`".to_string(),
            ))
        }
    };
    let task_id = TaskId::from(id.as_str());
    let ack = lock(&store).submit(Verdict {
        task_id: task_id.clone(),
        annotator: body.annotator,
        decision,
        timestamp_ms: now_ms(),
    })?;
    Ok(Json(Accepted { task_id, ack }))
}

async fn agreement(State(store): State<SharedStore>) -> impl IntoResponse {
    Json(lock(&store).session().agreement())
}

async fn export(State(store): State<SharedStore>) -> Result<Response, ApiError> {
    let mut out = Vec::new();
    lock(&store)
        .session()
        .export_tsv(&mut out)
        .map_err(AnnotationError::from)?;
    Ok((
        [(header::CONTENT_TYPE, "text/tab-separated-values; charset=utf-8")],
        out,
    )
        .into_response())
}

/// Serves until ctrl-c or SIGTERM, then writes a final snapshot.
pub async fn serve(listener: tokio::net::TcpListener, store: SharedStore, ui_dir: Option<PathBuf>) -> anyhow::Result<()> {
    let app = router(store.clone(), ui_dir);
    axum::serve(listener, app)
        .with_graceful_shutdown(shutdown_signal())
        .await?;
    lock(&store).snapshot()?;
    log::info!("session snapshot written");
    Ok(())
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}
