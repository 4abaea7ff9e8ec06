//! HTTP service backing the web UI.
//!
//! | Method | Path | Body / query | Response |
//! |---|---|---|---|
//! | GET | `/api/kernels` | | signatures with argument metadata |
//! | POST | `/api/validate` | experiment text | `{valid, diagnostics}` |
//! | POST | `/api/jobs` | experiment text | 202 job record |
//! | GET | `/api/jobs`, `/api/jobs/{id}` | | job records |
//! | GET | `/api/reports` | | report summaries |
//! | GET | `/api/reports/{id}` | | parsed report |
//! | GET | `/api/reports/{id}/series` | `metric`, `stat`, `discard_first`, `breakdown` | `{id, series}` |
//!
//! Errors are `{error, diagnostics}` with status 400 (invalid input), 404
//! (unknown id), or 409 (sampler unavailable). Jobs run one at a time in
//! submission order.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use kernbench_core::experiment::{deserialize, run_local, LocalOptions};
use kernbench_core::kernels::all_signatures;
use kernbench_core::report::{
    breakdown, series, MachineSpec, Metric, Query as SeriesQuery, Statistic,
};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::mpsc;
use tower_http::services::ServeDir;

use crate::check_experiment;
use crate::store::Store;

pub const DEFAULT_PORT: u16 = 8091;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub data_dir: PathBuf,
    pub sampler: PathBuf,
    pub static_dir: Option<PathBuf>,
    pub machine: MachineSpec,
    pub port: u16,
}

pub struct AppState {
    pub store: Arc<Store>,
    pub sampler: PathBuf,
    pub machine: MachineSpec,
    queue: mpsc::UnboundedSender<String>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    error: String,
    diagnostics: Vec<String>,
}

impl ApiError {
    fn new(status: StatusCode, error: impl Into<String>) -> Self {
        ApiError {
            status,
            error: error.into(),
            diagnostics: Vec::new(),
        }
    }

    fn not_found(what: &str, id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, format!("unknown {what} `{id}`"))
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({ "error": self.error, "diagnostics": self.diagnostics })),
        )
            .into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Builds the state and starts the job worker; needs a Tokio runtime.
pub fn app(config: &ServerConfig) -> anyhow::Result<(Router, Arc<AppState>)> {
    let store = Arc::new(Store::open(&config.data_dir)?);
    let (tx, rx) = mpsc::unbounded_channel();
    let state = Arc::new(AppState {
        store,
        sampler: config.sampler.clone(),
        machine: config.machine.clone(),
        queue: tx,
    });
    tokio::spawn(worker(state.clone(), rx));
    let mut router = router(state.clone());
    if let Some(dir) = &config.static_dir {
        router = router.fallback_service(ServeDir::new(dir));
    }
    Ok((router, state))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/kernels", get(kernels))
        .route("/api/validate", post(validate_text))
        .route("/api/jobs", post(create_job).get(list_jobs))
        .route("/api/jobs/{id}", get(get_job))
        .route("/api/reports", get(list_reports))
        .route("/api/reports/{id}", get(get_report))
        .route("/api/reports/{id}/series", get(get_series))
        .with_state(state)
}

pub async fn serve(config: ServerConfig) -> anyhow::Result<()> {
    let (router, _) = app(&config)?;
    let addr = SocketAddr::from(([127, 0, 0, 1], config.port));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("kernbench: serving on http://{addr}");
    axum::serve(listener, router).await?;
    Ok(())
}

async fn worker(state: Arc<AppState>, mut rx: mpsc::UnboundedReceiver<String>) {
    while let Some(id) = rx.recv().await {
        let store = state.store.clone();
        let sampler = state.sampler.clone();
        // Jobs run strictly one after another so timings do not interfere.
        let _ = tokio::task::spawn_blocking(move || run_job(&store, &sampler, &id)).await;
    }
}

fn run_job(store: &Store, sampler: &std::path::Path, id: &str) {
    let Some(job) = store.job(id) else { return };
    if store.mark_running(id).is_err() {
        return;
    }
    let result = deserialize(&job.experiment)
        .and_then(|exp| run_local(&exp, sampler, &LocalOptions::default()))
        .map_err(|e| vec![e.to_string()])
        .and_then(|text| store.finish(id, &text).map_err(|e| vec![format!("{e:#}")]));
    if let Err(diags) = result {
        let _ = store.fail(id, diags);
    }
}

async fn kernels() -> Json<serde_json::Value> {
    Json(json!(all_signatures()))
}

#[derive(Serialize)]
struct Validation {
    valid: bool,
    diagnostics: Vec<String>,
}

async fn validate_text(body: String) -> Json<Validation> {
    let diagnostics = check_experiment(&body).err().unwrap_or_default();
    Json(Validation {
        valid: diagnostics.is_empty(),
        diagnostics,
    })
}

async fn create_job(State(state): State<Arc<AppState>>, body: String) -> ApiResult<Response> {
    if let Err(diagnostics) = check_experiment(&body) {
        return Err(ApiError {
            status: StatusCode::BAD_REQUEST,
            error: "invalid experiment".into(),
            diagnostics,
        });
    }
    if !state.sampler.is_file() {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            format!("sampler unavailable at `{}`", state.sampler.display()),
        ));
    }
    let rec = state.store.create_job(&body).map_err(ApiError::internal)?;
    state
        .queue
        .send(rec.id.clone())
        .map_err(ApiError::internal)?;
    Ok((StatusCode::ACCEPTED, Json(rec)).into_response())
}

async fn list_jobs(State(state): State<Arc<AppState>>) -> Response {
    Json(state.store.jobs()).into_response()
}

async fn get_job(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let job = state
        .store
        .job(&id)
        .ok_or_else(|| ApiError::not_found("job", &id))?;
    Ok(Json(job).into_response())
}

async fn list_reports(State(state): State<Arc<AppState>>) -> Response {
    Json(state.store.reports()).into_response()
}

fn load(state: &AppState, id: &str) -> ApiResult<kernbench_core::report::Report> {
    state
        .store
        .load_report(id)
        .ok_or_else(|| ApiError::not_found("report", id))?
        .map_err(ApiError::internal)
}

async fn get_report(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let report = load(&state, &id)?;
    Ok(Json(json!({ "id": id, "report": report, "failures": report.failures() })).into_response())
}

#[derive(Debug, Deserialize)]
pub struct SeriesParams {
    metric: Option<String>,
    stat: Option<String>,
    discard_first: Option<bool>,
    breakdown: Option<bool>,
}

async fn get_series(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(p): Query<SeriesParams>,
) -> ApiResult<Response> {
    let report = load(&state, &id)?;
    let bad = |e: kernbench_core::report::ReportError| {
        ApiError::new(StatusCode::BAD_REQUEST, e.to_string())
    };
    let q = SeriesQuery {
        metric: p
            .metric
            .as_deref()
            .unwrap_or("gflops")
            .parse::<Metric>()
            .map_err(bad)?,
        statistic: p
            .stat
            .as_deref()
            .unwrap_or("median")
            .parse::<Statistic>()
            .map_err(bad)?,
        discard_first: p.discard_first.unwrap_or(false),
    };
    let out = if p.breakdown.unwrap_or(false) {
        breakdown(&report, q, &state.machine).map_err(bad)?
    } else {
        vec![series(&report, q, &state.machine).map_err(bad)?]
    };
    Ok(Json(json!({ "id": id, "series": out })).into_response())
}
