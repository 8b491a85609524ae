//! Local HTTP job service for kernel solves.
//!
//! Scenarios are validated and echoed, solves run as queued jobs on a
//! bounded worker pool with per-sweep progress, finished jobs expose the
//! same artifact files the command line writes, and trajectory probes run
//! synchronously. Every payload is JSON; the scenario schema is served at
//! `GET /schema`.

mod jobs;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use viab_core::artifact::{self, ProbeSpec};
use viab_core::scenario::{FieldError, Scenario, ScenarioFile};
use viab_core::Error;

pub use jobs::{JobRecord, JobState};

/// Published JSON schema of scenario files.
pub const SCENARIO_SCHEMA: &str = include_str!("../../../docs/scenario.schema.json");

#[derive(Clone, Debug)]
pub struct Config {
    /// Solves allowed to run at once.
    pub workers: usize,
    /// Threads per solve.
    pub threads: usize,
    /// Job artifacts go to `<data_dir>/jobs/<id>/`.
    pub data_dir: PathBuf,
}

impl Config {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self { workers: 1, threads: 1, data_dir: data_dir.into() }
    }
}

type AppState = Arc<jobs::Registry>;

pub fn router(config: Config) -> Router {
    let state: AppState = Arc::new(jobs::Registry::new(config));
    Router::new()
        .route("/schema", get(schema))
        .route("/scenarios", post(create_scenario))
        .route("/jobs", post(submit_job))
        .route("/jobs/{id}", get(get_job).delete(cancel_job))
        .route("/jobs/{id}/{artifact}", get(get_artifact))
        .route("/probe", post(probe))
        .with_state(state)
}

/// Binds `addr` and serves until the process ends.
pub async fn serve(addr: SocketAddr, config: Config) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(config)).await
}

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub fields: Vec<FieldError>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, error: impl Into<String>) -> Self {
        Self { status, body: ErrorBody { error: error.into(), fields: Vec::new() } }
    }

    fn fields(fields: Vec<FieldError>) -> Self {
        Self { status: StatusCode::BAD_REQUEST, body: ErrorBody { error: "invalid scenario".into(), fields } }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("unknown job `{id}`"))
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e {
            Error::Scenario { field, message } => Self::fields(vec![FieldError { field, message }]),
            Error::ContractViolation(_) | Error::Json(_) => Self::new(StatusCode::BAD_REQUEST, e.to_string()),
            other => Self::new(StatusCode::INTERNAL_SERVER_ERROR, other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn schema() -> Response {
    ([(header::CONTENT_TYPE, "application/schema+json")], SCENARIO_SCHEMA).into_response()
}

/// Parses and validates a scenario, reporting every bad field at once.
fn parse_scenario(text: &str) -> ApiResult<ScenarioFile> {
    let file = ScenarioFile::parse(text)?;
    let errors = file.field_errors();
    if errors.is_empty() {
        Ok(file)
    } else {
        Err(ApiError::fields(errors))
    }
}

#[derive(Debug, Serialize)]
struct ScenarioEcho {
    hash: String,
    scenario: ScenarioFile,
}

async fn create_scenario(State(reg): State<AppState>, body: Bytes) -> ApiResult<Json<ScenarioEcho>> {
    let text = std::str::from_utf8(&body).map_err(|_| ApiError::new(StatusCode::BAD_REQUEST, "body is not UTF-8"))?;
    let file = parse_scenario(text)?;
    Scenario::resolve(file.clone())?;
    let hash = file.hash();
    reg.remember(hash.clone(), file.clone());
    Ok(Json(ScenarioEcho { hash, scenario: file }))
}

/// Where a request's scenario comes from: exactly one of the three.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioRef {
    #[serde(default)]
    scenario: Option<Value>,
    #[serde(default)]
    packaged: Option<String>,
    /// Hash returned by `POST /scenarios`.
    #[serde(default)]
    hash: Option<String>,
    /// Grid override `[L nodes, P nodes]`.
    #[serde(default)]
    grid: Option<[usize; 2]>,
}

impl ScenarioRef {
    fn resolve(&self, reg: &jobs::Registry) -> ApiResult<Scenario> {
        let mut file = match (&self.scenario, &self.packaged, &self.hash) {
            (Some(v), None, None) => parse_scenario(&v.to_string())?,
            (None, Some(name), None) => {
                let text = viab_core::scenario::packaged(name)
                    .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no packaged scenario `{name}`")))?;
                parse_scenario(text)?
            }
            (None, None, Some(hash)) => reg
                .recall(hash)
                .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown scenario hash `{hash}`")))?,
            _ => {
                return Err(ApiError::new(
                    StatusCode::BAD_REQUEST,
                    "give exactly one of `scenario`, `packaged` or `hash`",
                ))
            }
        };
        if let Some(nodes) = self.grid {
            file.grid.nodes = nodes;
        }
        Ok(Scenario::resolve(file)?)
    }
}

fn json_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))
}

async fn submit_job(State(reg): State<AppState>, body: Bytes) -> ApiResult<(StatusCode, Json<JobRecord>)> {
    let req: ScenarioRef = json_body(&body)?;
    let scenario = req.resolve(&reg)?;
    let record = jobs::Registry::submit(&reg, scenario);
    Ok((StatusCode::ACCEPTED, Json(record)))
}

async fn get_job(State(reg): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<JobRecord>> {
    reg.record(&id).map(Json).ok_or_else(|| ApiError::not_found(&id))
}

async fn cancel_job(State(reg): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<JobRecord>> {
    reg.cancel(&id).map(Json).ok_or_else(|| ApiError::not_found(&id))
}

async fn get_artifact(State(reg): State<AppState>, Path((id, name)): Path<(String, String)>) -> ApiResult<Response> {
    let (file, content_type) = match name.as_str() {
        "raster" => (artifact::RASTER_FILE, "text/plain; charset=utf-8"),
        "report" => (artifact::REPORT_FILE, "application/json"),
        "boundary" => (artifact::BOUNDARY_FILE, "text/csv; charset=utf-8"),
        "trajectory" => (artifact::TRAJECTORY_FILE, "text/csv; charset=utf-8"),
        _ => return Err(ApiError::new(StatusCode::NOT_FOUND, format!("unknown artifact `{name}`"))),
    };
    let record = reg.record(&id).ok_or_else(|| ApiError::not_found(&id))?;
    if !matches!(record.state, JobState::Done { .. }) {
        return Err(ApiError::new(StatusCode::CONFLICT, format!("job `{id}` has not finished")));
    }
    if !record.artifacts.iter().any(|a| a == file) {
        return Err(ApiError::new(StatusCode::NOT_FOUND, format!("job `{id}` has no {name}")));
    }
    let bytes = tokio::fs::read(reg.job_dir(&id).join(file))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, content_type)], bytes).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProbeRequest {
    /// A finished job: its scenario, kernel and regulation map are used.
    #[serde(default)]
    job: Option<String>,
    #[serde(default)]
    scenario: Option<Value>,
    #[serde(default)]
    packaged: Option<String>,
    #[serde(default)]
    hash: Option<String>,
    probe: ProbeSpec,
}

#[derive(Debug, Serialize)]
struct ProbeResponse {
    trajectories: Vec<artifact::MemberTrajectory>,
}

async fn probe(State(reg): State<AppState>, body: Bytes) -> ApiResult<Json<ProbeResponse>> {
    let req: ProbeRequest = json_body(&body)?;
    let (scenario, solved) = match &req.job {
        Some(id) => {
            if req.scenario.is_some() || req.packaged.is_some() || req.hash.is_some() {
                return Err(ApiError::new(StatusCode::BAD_REQUEST, "give either `job` or a scenario"));
            }
            reg.solved(id)?
        }
        None => {
            let r = ScenarioRef { scenario: req.scenario, packaged: req.packaged, hash: req.hash, grid: None };
            (Arc::new(r.resolve(&reg)?), None)
        }
    };
    let spec = req.probe;
    let trajectories = tokio::task::spawn_blocking(move || {
        artifact::probe(&scenario, &spec, solved.as_deref().map(|(k, m)| (k, m)))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(ProbeResponse { trajectories }))
}
