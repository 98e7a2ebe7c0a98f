//! JSON service over HTTP.
//!
//! Computations that can run long (vertex enumeration, Monte Carlo, bounds,
//! estimation) are submitted as jobs. A job that finishes within the
//! configured wait answers the request directly; otherwise the response is
//! `202` with a job id to poll at `/v1/jobs/{id}`.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Duration;

use axum::body::{Body, Bytes};
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path, Query, Request, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use concordance_core::attainability::Limits;
use concordance_core::elliptical::McConfig;
use concordance_core::estimation::SampleMatrix;
use concordance_core::sampler::MixtureSampler;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use tower_http::cors::{AllowOrigin, CorsLayer};
use uuid::Uuid;

use crate::error::{ApiError, Error, Result};
use crate::fraction::{de_numbers, parse_label};
use crate::jobs::{Job, JobState, JobStore, JobView};
use crate::ops::{self, BoundsRequest, EllipticalRequest, EstimateOptions, KendallRequest, TLimitRequest, VerticesRequest};
use crate::parallel;
use crate::schema::{GroupWeightsDoc, SignatureDoc, SkeletalDoc, WeightsDoc};
use crate::session::{ConstraintInput, SessionStore, TargetMode};
use crate::table::{apply_options, read_samples, rows_to_csv, ColumnRef, CsvOptions};

/// Largest sample returned as JSON rather than streamed CSV.
pub const MAX_JSON_ROWS: usize = 100_000;

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub limits: Limits,
    pub mc: McConfig,
    /// How long a request waits for its job before answering `202`.
    pub sync_wait: Duration,
    /// How long finished jobs stay available for polling.
    pub job_retention: Duration,
    /// Allowed browser origins; `*` allows any.
    pub cors_origins: Vec<String>,
    /// Session directory; sessions live in memory only when unset.
    pub data_dir: Option<PathBuf>,
    pub max_body_bytes: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            limits: Limits::default(),
            mc: McConfig::default(),
            sync_wait: Duration::from_secs(2),
            job_retention: Duration::from_secs(600),
            cors_origins: vec!["http://localhost:5173".into(), "http://127.0.0.1:5173".into()],
            data_dir: None,
            max_body_bytes: 64 << 20,
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    pub sessions: Arc<SessionStore>,
    pub jobs: Arc<JobStore>,
    pub config: Arc<ServiceConfig>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Result<Self> {
        let sessions = match &config.data_dir {
            Some(dir) => SessionStore::open(dir, config.limits.clone())?,
            None => SessionStore::in_memory(config.limits.clone()),
        };
        Ok(Self {
            sessions: Arc::new(sessions),
            jobs: Arc::new(JobStore::new(config.job_retention)),
            config: Arc::new(config),
        })
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

type ApiResult = std::result::Result<Response, ApiError>;

fn bad_request(message: impl Into<String>) -> ApiError {
    ApiError::from(Error::Invalid(message.into()))
}

fn parse<T: DeserializeOwned>(body: &[u8]) -> std::result::Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::from(Error::Json(e)))
}

fn panicked() -> ApiError {
    ApiError::new(500, "internal", "computation panicked", Value::Null)
}

async fn blocking<T, F>(f: F) -> std::result::Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T> + Send + 'static,
{
    tokio::task::spawn_blocking(f).await.map_err(|_| panicked())?.map_err(ApiError::from)
}

#[derive(Debug, Default, Deserialize)]
struct RunQuery {
    /// Answer `202` at once instead of waiting.
    #[serde(default, rename = "async")]
    force_async: bool,
}

fn accepted(job: &Job) -> Response {
    let poll = format!("/v1/jobs/{}", job.id);
    let mut resp =
        (StatusCode::ACCEPTED, Json(json!({ "job_id": job.id, "status": "running", "poll": poll }))).into_response();
    if let Ok(v) = HeaderValue::from_str(&poll) {
        resp.headers_mut().insert(header::LOCATION, v);
    }
    resp
}

async fn run<T, F>(st: &AppState, kind: &str, force_async: bool, f: F) -> ApiResult
where
    T: Serialize,
    F: FnOnce(&AtomicBool) -> Result<T> + Send + 'static,
{
    let job = st.jobs.spawn(kind, move |stop| Ok(serde_json::to_value(f(stop)?)?));
    if force_async {
        return Ok(accepted(&job));
    }
    let state = job.wait(st.config.sync_wait).await;
    if state.is_finished() {
        st.jobs.remove(job.id);
    }
    match state {
        JobState::Running => Ok(accepted(&job)),
        JobState::Done { result } => Ok(Json(result).into_response()),
        JobState::Failed { error } => Err(error),
        JobState::Cancelled => Err(ApiError::from(Error::Core(concordance_core::Error::Cancelled))),
    }
}

async fn health(State(st): State<AppState>) -> Json<Value> {
    Json(json!({
        "status": "ok",
        "version": env!("CARGO_PKG_VERSION"),
        "sessions": st.sessions.list().len(),
        "jobs": st.jobs.len(),
        "limits": {
            "dim_cap": st.config.limits.dim_cap,
            "enumeration_cap": st.config.limits.enumeration_cap,
        },
        "mc_samples": st.config.mc.samples,
    }))
}

async fn attainability(State(st): State<AppState>, body: Bytes) -> ApiResult {
    let sig: SignatureDoc = parse(&body)?;
    let limits = st.config.limits.clone();
    let cert = blocking(move || ops::attainability(&sig, &limits)).await?;
    if cert.feasible {
        return Ok(Json(cert).into_response());
    }
    let message = cert.reason.clone().unwrap_or_else(|| "not attainable".into());
    Err(ApiError::new(422, "not_attainable", message, serde_json::to_value(&cert).unwrap_or(Value::Null)))
}

async fn bounds(State(st): State<AppState>, Query(q): Query<RunQuery>, body: Bytes) -> ApiResult {
    let req: BoundsRequest = parse(&body)?;
    let limits = st.config.limits.clone();
    run(&st, "bounds", q.force_async, move |stop| ops::bounds(&req, &limits, Some(stop))).await
}

async fn vertices(State(st): State<AppState>, Query(q): Query<RunQuery>, body: Bytes) -> ApiResult {
    let req: VerticesRequest = parse(&body)?;
    let limits = st.config.limits.clone();
    run(&st, "vertices", q.force_async, move |stop| ops::vertices(&req, &limits, Some(stop))).await
}

async fn elliptical(State(st): State<AppState>, Query(q): Query<RunQuery>, body: Bytes) -> ApiResult {
    let req: EllipticalRequest = parse(&body)?;
    let mc = st.config.mc;
    run(&st, "elliptical", q.force_async, move |stop| ops::elliptical(&req, &mc, Some(stop))).await
}

async fn elliptical_check(body: Bytes) -> ApiResult {
    let req: KendallRequest = parse(&body)?;
    Ok(Json(blocking(move || ops::elliptical_check(&req)).await?).into_response())
}

async fn tlimit(State(st): State<AppState>, Query(q): Query<RunQuery>, body: Bytes) -> ApiResult {
    let req: TLimitRequest = parse(&body)?;
    let mc = st.config.mc;
    run(&st, "tlimit", q.force_async, move |stop| ops::tlimit(&req, &mc, Some(stop))).await
}

async fn skeletal(State(st): State<AppState>, body: Bytes) -> ApiResult {
    let doc: SkeletalDoc = parse(&body)?;
    let limits = st.config.limits.clone();
    Ok(Json(blocking(move || ops::skeletal(&doc, &limits)).await?).into_response())
}

async fn skeletal_expand(State(st): State<AppState>, body: Bytes) -> ApiResult {
    let doc: GroupWeightsDoc = parse(&body)?;
    let limits = st.config.limits.clone();
    Ok(Json(blocking(move || ops::expand(&doc, &limits)).await?).into_response())
}

async fn bmatrix(Path(d): Path<usize>) -> ApiResult {
    Ok(Json(blocking(move || ops::bmatrix(d)).await?).into_response())
}

async fn amatrix(State(st): State<AppState>, Path(d): Path<usize>) -> ApiResult {
    let limits = st.config.limits.clone();
    Ok(Json(blocking(move || ops::amatrix(d, &limits)).await?).into_response())
}

/// A sample table from a multipart upload (`file` plus text fields) or a
/// JSON body (`rows` or `csv` plus option fields).
struct TableInput {
    data: SampleMatrix,
    params: Map<String, Value>,
}

fn csv_options(params: &Map<String, Value>) -> std::result::Result<CsvOptions, ApiError> {
    let header = match params.get("header") {
        None | Some(Value::Null) => None,
        Some(Value::Bool(b)) => Some(*b),
        Some(v) => return Err(bad_request(format!("header must be a boolean, got {v}"))),
    };
    let log_returns = match params.get("log_returns") {
        None | Some(Value::Null) => false,
        Some(Value::Bool(b)) => *b,
        Some(v) => return Err(bad_request(format!("log_returns must be a boolean, got {v}"))),
    };
    let skip_columns = match params.get("skip_columns") {
        None | Some(Value::Null) => 0,
        Some(v) => v.as_u64().ok_or_else(|| bad_request(format!("skip_columns must be a count, got {v}")))? as usize,
    };
    let columns = match params.get("columns") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.split(',').filter(|c| !c.trim().is_empty()).map(ColumnRef::parse).collect()),
        Some(Value::Number(n)) => Some(vec![ColumnRef::parse(&n.to_string())]),
        Some(Value::Array(items)) => Some(
            items
                .iter()
                .map(|c| match c {
                    Value::String(s) => Ok(ColumnRef::parse(s)),
                    Value::Number(n) => Ok(ColumnRef::parse(&n.to_string())),
                    v => Err(bad_request(format!("bad column {v}"))),
                })
                .collect::<std::result::Result<_, _>>()?,
        ),
        Some(v) => return Err(bad_request(format!("bad columns {v}"))),
    };
    Ok(CsvOptions { header, log_returns, columns, skip_columns })
}

fn field_error(e: axum::extract::multipart::MultipartError) -> ApiError {
    bad_request(e.body_text())
}

async fn table_input(st: &AppState, req: Request) -> std::result::Result<TableInput, ApiError> {
    let multipart = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    if multipart {
        let mut form = Multipart::from_request(req, st).await.map_err(|e| bad_request(e.body_text()))?;
        let mut file = None;
        let mut params = Map::new();
        while let Some(field) = form.next_field().await.map_err(field_error)? {
            let name = field.name().unwrap_or_default().to_string();
            let bytes = field.bytes().await.map_err(field_error)?;
            if name == "file" {
                file = Some(bytes);
            } else {
                let text = String::from_utf8_lossy(&bytes).trim().to_string();
                params.insert(name, serde_json::from_str(&text).unwrap_or(Value::String(text)));
            }
        }
        let file = file.ok_or_else(|| bad_request("multipart upload needs a 'file' field"))?;
        let opts = csv_options(&params)?;
        let data = blocking(move || read_samples(&file[..], &opts)).await?;
        return Ok(TableInput { data, params });
    }
    let body = Bytes::from_request(req, st).await.map_err(|e| bad_request(e.body_text()))?;
    let mut params: Map<String, Value> = parse(&body)?;
    let opts = csv_options(&params)?;
    let data = match (params.remove("rows"), params.remove("csv")) {
        (Some(rows), None) => {
            let rows: Vec<Vec<f64>> = serde_json::from_value(rows).map_err(|e| ApiError::from(Error::Json(e)))?;
            let mut data = SampleMatrix::from_rows(&rows).map_err(Error::from)?;
            if let Some(names) = params.remove("names") {
                let names: Vec<String> =
                    serde_json::from_value(names).map_err(|e| ApiError::from(Error::Json(e)))?;
                data = data.with_names(names).map_err(Error::from)?;
            }
            apply_options(data, &opts)?
        }
        (None, Some(Value::String(text))) => blocking(move || read_samples(text.as_bytes(), &opts)).await?,
        _ => return Err(bad_request("body needs exactly one of 'rows' or 'csv'")),
    };
    Ok(TableInput { data, params })
}

fn options<T: DeserializeOwned>(params: &Map<String, Value>) -> std::result::Result<T, ApiError> {
    serde_json::from_value(Value::Object(params.clone())).map_err(|e| ApiError::from(Error::Json(e)))
}

async fn estimate(State(st): State<AppState>, Query(q): Query<RunQuery>, req: Request) -> ApiResult {
    let input = table_input(&st, req).await?;
    let opts: EstimateOptions = options(&input.params)?;
    let data = input.data;
    run(&st, "estimate", q.force_async, move |_| ops::estimate(&data, &opts)).await
}

#[derive(Deserialize)]
struct ValidateOptions {
    #[serde(default = "default_level")]
    level: f64,
}

fn default_level() -> f64 {
    ops::DEFAULT_LEVEL
}

async fn validate(State(st): State<AppState>, Query(q): Query<RunQuery>, req: Request) -> ApiResult {
    let input = table_input(&st, req).await?;
    let opts: ValidateOptions = options(&input.params)?;
    let data = input.data;
    run(&st, "validate", q.force_async, move |_| ops::validate(&data, opts.level)).await
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
enum SampleFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Deserialize)]
struct SampleRequest {
    d: usize,
    #[serde(deserialize_with = "de_numbers")]
    w: Vec<f64>,
    n: usize,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    format: SampleFormat,
}

#[derive(Serialize)]
struct SampleDoc {
    d: usize,
    n: usize,
    seed: u64,
    rows: Vec<Vec<f64>>,
}

fn sample_header(d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("u{j}")).collect()
}

/// Streams CSV one RNG block at a time; generation stops when the client
/// goes away.
async fn sample(State(st): State<AppState>, body: Bytes) -> ApiResult {
    let req: SampleRequest = parse(&body)?;
    let w = WeightsDoc { d: req.d, w: req.w }.to_weights()?;
    let seed = req.seed.unwrap_or(st.config.mc.seed);
    let n = req.n;
    if n == 0 {
        return Err(bad_request("n must be at least 1"));
    }
    let d = w.d();
    if req.format == SampleFormat::Json {
        if n > MAX_JSON_ROWS {
            return Err(bad_request(format!("JSON samples are limited to {MAX_JSON_ROWS} rows; use CSV")));
        }
        let s = blocking(move || parallel::sample_mixture(&w, n, seed)).await?;
        let rows = s.values.chunks(d).map(<[f64]>::to_vec).collect();
        return Ok(Json(SampleDoc { d, n, seed, rows }).into_response());
    }
    let sampler = MixtureSampler::new(&w).map_err(Error::from)?;
    let (tx, rx) = tokio::sync::mpsc::channel::<std::result::Result<Bytes, std::io::Error>>(4);
    tokio::task::spawn_blocking(move || {
        let head = rows_to_csv(Some(&sample_header(d)), d, &[]).map_err(std::io::Error::other);
        if tx.blocking_send(head.map(Bytes::from)).is_err() {
            return;
        }
        for b in 0..MixtureSampler::blocks(n) {
            let values = sampler.block(seed, b, MixtureSampler::block_len(n, b));
            let chunk = rows_to_csv(None, d, &values).map(Bytes::from).map_err(std::io::Error::other);
            if tx.blocking_send(chunk).is_err() {
                return;
            }
        }
    });
    let stream = futures::stream::unfold(rx, |mut rx| async move { rx.recv().await.map(|item| (item, rx)) });
    Response::builder()
        .header(header::CONTENT_TYPE, "text/csv")
        .header("x-sample-seed", seed.to_string())
        .body(Body::from_stream(stream))
        .map_err(|e| ApiError::new(500, "internal", e.to_string(), Value::Null))
}

fn session_id(s: &str) -> std::result::Result<Uuid, ApiError> {
    Uuid::parse_str(s).map_err(|_| ApiError::from(Error::UnknownSession(s.to_string())))
}

#[derive(Deserialize)]
struct CreateSession {
    d: usize,
    #[serde(default)]
    targets: Option<TargetMode>,
    #[serde(default)]
    constraints: Vec<ConstraintInput>,
}

async fn create_session(State(st): State<AppState>, body: Bytes) -> ApiResult {
    let req: CreateSession = parse(&body)?;
    let store = st.sessions.clone();
    let s = blocking(move || store.create(req.d, req.targets, &req.constraints)).await?;
    Ok((StatusCode::CREATED, Json(&*s)).into_response())
}

async fn list_sessions(State(st): State<AppState>) -> Json<Value> {
    Json(json!({ "sessions": st.sessions.list() }))
}

async fn get_session(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let s = st.sessions.get(session_id(&id)?)?;
    Ok(Json(&*s).into_response())
}

async fn delete_session(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult {
    st.sessions.delete(session_id(&id)?)?;
    Ok(StatusCode::NO_CONTENT.into_response())
}

async fn add_constraint(State(st): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let id = session_id(&id)?;
    let input: ConstraintInput = parse(&body)?;
    let store = st.sessions.clone();
    let s = blocking(move || store.add_constraint(id, &input)).await?;
    Ok(Json(&*s).into_response())
}

async fn remove_constraint(State(st): State<AppState>, Path((id, label)): Path<(String, String)>) -> ApiResult {
    let id = session_id(&id)?;
    let label = parse_label(&label)?;
    let store = st.sessions.clone();
    let s = blocking(move || store.remove_constraint(id, &label)).await?;
    Ok(Json(&*s).into_response())
}

fn job_id(s: &str) -> std::result::Result<Uuid, ApiError> {
    Uuid::parse_str(s).map_err(|_| ApiError::from(Error::UnknownJob(s.to_string())))
}

async fn get_job(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let job = st.jobs.get(job_id(&id)?)?;
    Ok(Json(JobView::of(&job)).into_response())
}

async fn cancel_job(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let job = st.jobs.get(job_id(&id)?)?;
    job.cancel();
    Ok(Json(JobView::of(&job)).into_response())
}

fn cors(origins: &[String]) -> CorsLayer {
    let allow = if origins.iter().any(|o| o == "*") {
        AllowOrigin::any()
    } else {
        AllowOrigin::list(origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()))
    };
    CorsLayer::new()
        .allow_origin(allow)
        .allow_methods([Method::GET, Method::POST, Method::DELETE])
        .allow_headers([header::CONTENT_TYPE])
        .expose_headers([header::LOCATION])
}

pub fn router(state: AppState) -> Router {
    let limit = state.config.max_body_bytes;
    let cors = cors(&state.config.cors_origins);
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/attainability", post(attainability))
        .route("/v1/bounds", post(bounds))
        .route("/v1/vertices", post(vertices))
        .route("/v1/estimate", post(estimate))
        .route("/v1/elliptical", post(elliptical))
        .route("/v1/elliptical/attainable", post(elliptical_check))
        .route("/v1/tlimit", post(tlimit))
        .route("/v1/skeletal", post(skeletal))
        .route("/v1/skeletal/expand", post(skeletal_expand))
        .route("/v1/bmatrix/{d}", get(bmatrix))
        .route("/v1/amatrix/{d}", get(amatrix))
        .route("/v1/sample", post(sample))
        .route("/v1/validate", post(validate))
        .route("/v1/sessions", post(create_session).get(list_sessions))
        .route("/v1/sessions/{id}", get(get_session).delete(delete_session))
        .route("/v1/sessions/{id}/constraints", post(add_constraint))
        .route("/v1/sessions/{id}/constraints/{label}", axum::routing::delete(remove_constraint))
        .route("/v1/jobs/{id}", get(get_job).delete(cancel_job))
        .layer(DefaultBodyLimit::max(limit))
        .layer(cors)
        .with_state(state)
}

/// Serves until interrupted.
pub async fn serve(addr: SocketAddr, config: ServiceConfig) -> Result<()> {
    let state = AppState::new(config)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
