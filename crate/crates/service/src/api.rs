use std::path::{Component, Path as FsPath, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{FromRequest, Path, Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use chrono::{SecondsFormat, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use displaylab::bandit::QEntry;
use displaylab::data_pool::{generate_synthetic, load_pool, split_pool, DataPool, Label, PoolFormat, SyntheticSpec};
use displaylab::session::{start_session, DisplayStatus, IterationRecord, SessionConfig, SessionState};
use displaylab::strategies::LambdaConfig;

use crate::error::ApiError;
use crate::store::SessionFile;
use crate::AppState;

/// Json body whose rejections use the service's error shape.
pub struct JsonBody<T>(pub T);

impl<S, T> FromRequest<S> for JsonBody<T>
where
    S: Send + Sync,
    T: DeserializeOwned,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let bytes = Bytes::from_request(req, state)
            .await
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text()))?;
        serde_json::from_slice(&bytes).map(JsonBody).map_err(|e| {
            use serde_json::error::Category;
            match e.classify() {
                Category::Data => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_request", e.to_string()),
                _ => ApiError::new(StatusCode::BAD_REQUEST, "malformed_json", e.to_string()),
            }
        })
    }
}

fn default_train_fraction() -> f64 {
    0.5
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    /// Pool file relative to the data directory (`.csv` or `.jsonl`).
    #[serde(default)]
    pub dataset: Option<String>,
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default)]
    pub config: SessionConfig,
}

#[derive(Debug, Serialize)]
pub struct SessionHandle {
    pub session_id: String,
    pub created_at: String,
    pub config: SessionConfig,
}

#[derive(Debug, Serialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub created_at: String,
    pub strategy: String,
    pub iteration: usize,
    pub iterations: usize,
    pub status: DisplayStatus,
}

#[derive(Debug, Serialize)]
pub struct DisplayItem {
    pub id: String,
    pub image_refs: Option<[String; 2]>,
    pub features: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct DisplayBody {
    pub session_id: String,
    pub iteration: usize,
    pub status: DisplayStatus,
    pub items: Vec<DisplayItem>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelItem {
    pub id: String,
    pub label: Label,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelsRequest {
    pub labels: Vec<LabelItem>,
}

#[derive(Debug, Serialize)]
pub struct Metrics {
    pub session_id: String,
    pub strategy: String,
    pub iteration: usize,
    pub iterations: usize,
    pub status: DisplayStatus,
    pub history: Vec<IterationRecord>,
    pub sampling_rates: Vec<f64>,
    pub actions: Vec<Option<LambdaConfig>>,
    /// Per-iteration EER in percent; absent when evaluation is off.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eer_percent: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc_percent: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_values: Option<Vec<QEntry>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct LabelsAccepted {
    pub accepted: usize,
    pub next_iteration: usize,
    pub status: DisplayStatus,
    pub metrics: Metrics,
}

fn metrics(file: &SessionFile) -> Metrics {
    let s = &file.state;
    let history = s.history().to_vec();
    let eer_percent = if s.config.evaluation_enabled {
        history.iter().map(|r| r.eer.map(|e| 100.0 * e)).collect::<Option<Vec<f64>>>()
    } else {
        None
    };
    let auc_percent = eer_percent
        .as_ref()
        .filter(|v| !v.is_empty())
        .map(|v| v.iter().sum::<f64>() / v.len() as f64);
    Metrics {
        session_id: file.session_id.clone(),
        strategy: s.config.strategy.to_string(),
        iteration: s.iteration(),
        iterations: s.config.iterations,
        status: s.status(),
        sampling_rates: history.iter().map(|r| r.samp_percent).collect(),
        actions: history.iter().map(|r| r.action).collect(),
        history,
        eer_percent,
        auc_percent,
        q_values: s.qtable().map(|q| q.entries()),
        epsilon: s.qtable().map(|q| q.epsilon),
    }
}

fn display_body(file: &SessionFile) -> DisplayBody {
    let s = &file.state;
    DisplayBody {
        session_id: file.session_id.clone(),
        iteration: s.iteration(),
        status: s.status(),
        items: s
            .display_samples()
            .into_iter()
            .map(|x| DisplayItem { id: x.id.clone(), image_refs: x.image_refs.clone(), features: x.features.clone() })
            .collect(),
    }
}

/// Resolves a relative reference inside `root`, refusing anything that could
/// leave it (absolute paths, `..`, symlinks pointing outside).
fn resolve_under(root: &FsPath, reference: &str) -> Result<PathBuf, ApiError> {
    let rel = FsPath::new(reference);
    let clean = !reference.is_empty() && rel.components().all(|c| matches!(c, Component::Normal(_)));
    if !clean {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "invalid_path", "path must be relative and stay inside the data directory")
            .with_details(json!({ "path": reference })));
    }
    let missing = || ApiError::not_found("file", reference);
    let root = root.canonicalize().map_err(|_| missing())?;
    let full = root.join(rel).canonicalize().map_err(|_| missing())?;
    if !full.starts_with(&root) || !full.is_file() {
        return Err(missing());
    }
    Ok(full)
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

/// Runs `f` on the session while holding its lock.
async fn with_session<T, F>(app: &AppState, id: &str, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&AppState, &mut SessionFile) -> Result<T, ApiError> + Send + 'static,
{
    let entry = app.store().get(id).ok_or_else(|| ApiError::not_found("session", id))?;
    let app = app.clone();
    blocking(move || {
        let mut guard = entry.lock().map_err(|_| ApiError::internal("session lock poisoned"))?;
        f(&app, &mut guard)
    })
    .await
}

fn build_pool(app: &AppState, req: &CreateRequest) -> Result<DataPool, ApiError> {
    let pool = match (&req.dataset, &req.synthetic) {
        (Some(locator), None) => {
            let path = resolve_under(&app.config().data_dir, locator).map_err(|e| match e.status {
                StatusCode::NOT_FOUND => ApiError::not_found("dataset", locator),
                _ => e,
            })?;
            let format = PoolFormat::from_path(&path).ok_or_else(|| {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_dataset", "dataset must be a .csv or .jsonl file")
            })?;
            load_pool(&path, format)?
        }
        (None, Some(spec)) => generate_synthetic(spec)?,
        _ => {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "validation_error",
                "give exactly one of `dataset` or `synthetic`",
            ))
        }
    };
    Ok(split_pool(&pool, req.train_fraction, req.split_seed)?)
}

pub async fn create_session(
    State(app): State<AppState>,
    JsonBody(req): JsonBody<CreateRequest>,
) -> Result<(StatusCode, Json<SessionHandle>), ApiError> {
    let app2 = app.clone();
    let handle = blocking(move || {
        let pool = build_pool(&app2, &req)?;
        let state = start_session(Arc::new(pool), req.config.clone())?;
        let file = SessionFile {
            session_id: uuid::Uuid::new_v4().to_string(),
            created_at: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
            dataset: req.dataset.clone(),
            state,
        };
        let handle = SessionHandle {
            session_id: file.session_id.clone(),
            created_at: file.created_at.clone(),
            config: file.state.config.clone(),
        };
        app2.store()
            .insert(file)
            .map_err(|e| ApiError::internal(format!("could not persist session: {e}")))?;
        Ok(handle)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(handle)))
}

pub async fn list_sessions(State(app): State<AppState>) -> Result<Json<Vec<SessionSummary>>, ApiError> {
    let mut out = Vec::new();
    for id in app.store().ids() {
        let summary = with_session(&app, &id, |_, f| {
            Ok(SessionSummary {
                session_id: f.session_id.clone(),
                created_at: f.created_at.clone(),
                strategy: f.state.config.strategy.to_string(),
                iteration: f.state.iteration(),
                iterations: f.state.config.iterations,
                status: f.state.status(),
            })
        })
        .await?;
        out.push(summary);
    }
    Ok(Json(out))
}

pub async fn get_display(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<DisplayBody>, ApiError> {
    with_session(&app, &id, |_, f| Ok(display_body(f))).await.map(Json)
}

pub async fn post_labels(
    State(app): State<AppState>,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<LabelsRequest>,
) -> Result<Json<LabelsAccepted>, ApiError> {
    let labels: Vec<(String, Label)> = req.labels.into_iter().map(|l| (l.id, l.label)).collect();
    with_session(&app, &id, move |app, f| {
        if f.state.is_finished() {
            return Err(ApiError::new(StatusCode::GONE, "session_finished", "session already finished"));
        }
        let mut next: SessionState = f.state.clone();
        next.submit_labels(&labels)?;
        let updated = SessionFile { state: next, ..f.clone() };
        app.store()
            .persist(&updated)
            .map_err(|e| ApiError::internal(format!("could not persist session: {e}")))?;
        *f = updated;
        Ok(LabelsAccepted {
            accepted: labels.len(),
            next_iteration: f.state.iteration(),
            status: f.state.status(),
            metrics: metrics(f),
        })
    })
    .await
    .map(Json)
}

pub async fn get_metrics(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<Metrics>, ApiError> {
    with_session(&app, &id, |_, f| Ok(metrics(f))).await.map(Json)
}

pub async fn get_state(State(app): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let bytes = with_session(&app, &id, |_, f| {
        serde_json::to_vec(f).map_err(|e| ApiError::internal(e.to_string()))
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response())
}

fn content_type(path: &FsPath) -> &'static str {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        Some("tif" | "tiff") => "image/tiff",
        Some("svg") => "image/svg+xml",
        Some("json") => "application/json",
        Some("csv") => "text/csv",
        _ => "application/octet-stream",
    }
}

pub async fn get_file(State(app): State<AppState>, Path(reference): Path<String>) -> Result<Response, ApiError> {
    let path = resolve_under(&app.config().data_dir, &reference)?;
    let mime = content_type(&path);
    let bytes = blocking(move || std::fs::read(&path).map_err(|e| ApiError::internal(e.to_string()))).await?;
    Ok(([(header::CONTENT_TYPE, mime)], bytes).into_response())
}

pub async fn fallback() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route")
}
