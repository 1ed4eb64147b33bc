//! HTTP API over the HARA engine. Projects live as files in a store
//! directory; every handler loads, mutates and saves through
//! `hara_core::io`, so the service keeps no state between requests.

mod error;
mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{FromRequestParts, Path, Query, State};
use axum::http::{header, request::Parts, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use hara_core::io::{commit_item_definition, ingest_item_definition, SourceFormat, FORMAT_VERSION};
use hara_core::model::NewEntity;
use hara_core::pipeline::{stage_board, GenerateOptions};
use hara_core::risk::{RateOptions, Rationale};
use hara_core::*;
use serde::Deserialize;
use serde_json::{json, Value};

pub use error::ApiError;
pub use store::Store;

/// Actor used when a request carries no `X-Hara-Actor` header.
pub const DEFAULT_ACTOR: &str = "anonymous-engineer";
pub const ACTOR_HEADER: &str = "x-hara-actor";

pub struct ServiceConfig {
    pub store_dir: PathBuf,
    pub catalog: Catalog,
}

struct AppState {
    store: Store,
    catalog: Catalog,
}

type Shared = Arc<AppState>;
type ApiResult<T> = std::result::Result<T, ApiError>;

/// Engineer named by the `X-Hara-Actor` header.
pub struct RequestActor(pub Actor);

impl<S: Send + Sync> FromRequestParts<S> for RequestActor {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, _state: &S) -> ApiResult<Self> {
        let named = parts.headers.get(ACTOR_HEADER).and_then(|v| v.to_str().ok()).map(str::trim).filter(|s| !s.is_empty());
        match named {
            Some(id) => Ok(Self(Actor::engineer(id))),
            None => {
                if parts.method != axum::http::Method::GET {
                    log::warn!("{} {} without {ACTOR_HEADER}; recording as {DEFAULT_ACTOR}", parts.method, parts.uri.path());
                }
                Ok(Self(Actor::engineer(DEFAULT_ACTOR)))
            }
        }
    }
}

fn join_error(e: tokio::task::JoinError) -> ApiError {
    ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "InternalError", e.to_string())
}

async fn read<T: Send + 'static>(
    state: &Shared,
    id: &str,
    f: impl FnOnce(&AppState, io::ProjectFile) -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    let path = state.store.path_of(id)?;
    let lock = state.store.lock_for(id);
    let _guard = lock.read().await;
    let state = state.clone();
    tokio::task::spawn_blocking(move || {
        let file = state.store.load(&path)?;
        f(&state, file)
    })
    .await
    .map_err(join_error)?
}

async fn mutate<T: Send + 'static>(
    state: &Shared,
    id: &str,
    f: impl FnOnce(&AppState, &mut Project, &mut BackendConfig) -> hara_core::Result<T> + Send + 'static,
) -> ApiResult<T> {
    let path = state.store.path_of(id)?;
    let lock = state.store.lock_for(id);
    let _guard = lock.write().await;
    let state = state.clone();
    tokio::task::spawn_blocking(move || state.store.update(&path, |p, b| f(&state, p, b)).map_err(ApiError::from))
        .await
        .map_err(join_error)?
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(error::body_error)
}

/// Like [`parse_body`], but an empty body means "all defaults".
fn parse_optional_body<T: serde::de::DeserializeOwned + Default>(body: &Bytes) -> ApiResult<T> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    parse_body(body)
}

pub fn router(config: ServiceConfig) -> std::io::Result<Router> {
    let state = Arc::new(AppState { store: Store::open(config.store_dir)?, catalog: config.catalog });
    Ok(Router::new()
        .route("/health", get(|| async { Json(json!({"status": "ok"})) }))
        .route("/asil", get(asil_preview))
        .route("/projects", post(create_project).get(list_projects))
        .route("/projects/{id}", get(snapshot))
        .route("/projects/{id}/generate", post(generate))
        .route("/projects/{id}/reviews", post(submit_review))
        .route("/projects/{id}/ratings", post(submit_rating))
        .route("/projects/{id}/entities", post(add_entity))
        .route("/projects/{id}/advance", post(advance))
        .route("/projects/{id}/reopen", post(reopen_stage))
        .route("/projects/{id}/validation", get(validation))
        .route("/projects/{id}/metrics", get(project_metrics))
        .route("/projects/{id}/audit", get(audit))
        .route("/projects/{id}/report", get(report))
        .route("/projects/{id}/trace", get(trace))
        .route("/projects/{id}/trace/path", get(trace_path))
        .with_state(state))
}

/// Binds and serves until the process exits. `on_bound` receives the actual
/// address, which matters when the port is 0.
pub async fn serve(addr: SocketAddr, config: ServiceConfig, on_bound: impl FnOnce(SocketAddr)) -> std::io::Result<()> {
    let app = router(config)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    on_bound(listener.local_addr()?);
    axum::serve(listener, app).await
}

/// Runs the service on a background thread with its own runtime and returns
/// once it is accepting connections.
pub fn spawn(addr: SocketAddr, config: ServiceConfig) -> std::io::Result<SocketAddr> {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let runtime = match tokio::runtime::Builder::new_multi_thread().enable_all().build() {
            Ok(rt) => rt,
            Err(e) => {
                let _ = tx.send(Err(e));
                return;
            }
        };
        let done = tx.clone();
        let result = runtime.block_on(serve(addr, config, move |bound| {
            let _ = tx.send(Ok(bound));
        }));
        if let Err(e) = result {
            let _ = done.send(Err(e));
        }
    });
    rx.recv().map_err(|e| std::io::Error::other(e.to_string()))?
}

#[derive(Deserialize)]
struct ClassQuery {
    #[serde(rename = "S")]
    s: String,
    #[serde(rename = "E")]
    e: String,
    #[serde(rename = "C")]
    c: String,
}

fn classes(s: &str, e: &str, c: &str) -> hara_core::Result<(Severity, Exposure, Controllability)> {
    Ok((s.parse()?, e.parse()?, c.parse()?))
}

fn asil_body(asil: Asil) -> Value {
    json!({ "asil": asil, "label": asil.label() })
}

async fn asil_preview(Query(q): Query<ClassQuery>) -> ApiResult<Json<Value>> {
    let (s, e, c) = classes(&q.s, &q.e, &q.c)?;
    Ok(Json(asil_body(compute_asil(s, e, c))))
}

async fn create_project(State(state): State<Shared>, RequestActor(actor): RequestActor, headers: HeaderMap, body: Bytes) -> ApiResult<Response> {
    let text = std::str::from_utf8(&body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "ParseError", e.to_string()))?;
    let csv = headers.get(header::CONTENT_TYPE).and_then(|v| v.to_str().ok()).is_some_and(|v| v.starts_with("text/csv"));
    let doc = ingest_item_definition(text, if csv { SourceFormat::Csv } else { SourceFormat::Json })?;
    let mut project = Project::new(doc.name.clone().unwrap_or_else(|| "untitled".into()));
    commit_item_definition(&mut project, &doc, &actor)?;
    let st = state.clone();
    let id = tokio::task::spawn_blocking(move || st.store.create(&project)).await.map_err(join_error)??;
    log::info!("created project {id}");
    Ok((StatusCode::CREATED, Json(json!({ "project_id": id, "stage": Stage::FunctionExtraction }))).into_response())
}

async fn list_projects(State(state): State<Shared>) -> ApiResult<Json<Value>> {
    let ids = state.store.list().map_err(HaraError::from)?;
    let mut out = Vec::new();
    for id in ids {
        if let Ok(summary) = read(&state, &id, |_, f| Ok(json!({"name": f.project.name, "stage": f.project.stage}))).await {
            out.push(json!({ "project_id": id, "name": summary["name"], "stage": summary["stage"] }));
        }
    }
    Ok(Json(json!({ "projects": out })))
}

async fn snapshot(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let pid = id.clone();
    read(&state, &id, move |_, file| {
        let project = file.into_project();
        Ok(Json(json!({
            "project_id": pid,
            "format_version": FORMAT_VERSION,
            "stage": project.stage,
            "pending": project.pending_at(project.stage),
            "stage_board": stage_board(&project),
            "audit": { "len": project.audit.len(), "head_hash": project.audit.head_hash() },
            "project": project,
        })))
    })
    .await
}

#[derive(Deserialize, Default)]
struct GenerateBody {
    #[serde(default)]
    backend: Option<String>,
    #[serde(default)]
    max_candidates: Option<usize>,
    #[serde(default)]
    seed: Option<u64>,
    /// One-off remote settings; not persisted.
    #[serde(default)]
    backend_config: Option<BackendConfig>,
}

async fn generate(State(state): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<pipeline::CommittedBatch>> {
    let body: GenerateBody = parse_optional_body(&body)?;
    let batch = mutate(&state, &id, move |st, project, stored| {
        let mut config = body.backend_config.unwrap_or_else(|| stored.clone());
        if let Some(kind) = body.backend.as_deref() {
            config.kind = kind.parse()?;
        }
        let backend = hara_core::backend::backend_from_config(&config, st.catalog.clone())?;
        let mut opts = GenerateOptions { seed: body.seed, ..Default::default() };
        if let Some(n) = body.max_candidates {
            opts.max_candidates = n;
        }
        run_stage_generation(project, backend.as_ref(), opts)
    })
    .await?;
    Ok(Json(batch))
}

#[derive(Deserialize)]
struct ReviewBody {
    item_ref: String,
    decision: pipeline::Decision,
    #[serde(default)]
    modified_payload: Option<Value>,
    #[serde(default)]
    note: Option<String>,
}

async fn submit_review(
    State(state): State<Shared>,
    Path(id): Path<String>,
    RequestActor(actor): RequestActor,
    body: Bytes,
) -> ApiResult<Json<pipeline::ReviewOutcome>> {
    let body: ReviewBody = parse_body(&body)?;
    let decision = ReviewDecision {
        item_ref: body.item_ref,
        decision: body.decision,
        modified_payload: body.modified_payload,
        reviewer: actor.id,
        note: body.note,
    };
    let outcome = mutate(&state, &id, move |_, project, _| review(project, &decision)).await?;
    Ok(Json(outcome))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RationaleInput {
    Text(String),
    PerFactor(Rationale),
}

#[derive(Deserialize)]
struct RatingBody {
    hazard_id: String,
    #[serde(rename = "S")]
    s: String,
    #[serde(rename = "E")]
    e: String,
    #[serde(rename = "C")]
    c: String,
    rationale: RationaleInput,
    #[serde(default = "yes")]
    confirm: bool,
    #[serde(default)]
    supersede: bool,
}

fn yes() -> bool {
    true
}

async fn submit_rating(
    State(state): State<Shared>,
    Path(id): Path<String>,
    RequestActor(actor): RequestActor,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let body: RatingBody = parse_body(&body)?;
    let (severity, exposure, controllability) = classes(&body.s, &body.e, &body.c)?;
    let rationale = match body.rationale {
        RationaleInput::Text(t) => Rationale::uniform(t),
        RationaleInput::PerFactor(r) => r,
    };
    let rating = RiskRating { hazard_id: body.hazard_id, severity, exposure, controllability, rationale };
    let opts = RateOptions { confirm: body.confirm, supersede: body.supersede };
    let record = mutate(&state, &id, move |_, project, _| rate_hazard(project, rating, opts, &actor)).await?;
    let mut out = asil_body(record.item.asil());
    out["rating_id"] = json!(record.id);
    out["status"] = json!(record.status);
    Ok(Json(out))
}

async fn add_entity(
    State(state): State<Shared>,
    Path(id): Path<String>,
    RequestActor(actor): RequestActor,
    body: Bytes,
) -> ApiResult<Response> {
    let entity: NewEntity = parse_body(&body)?;
    let new_id = mutate(&state, &id, move |_, project, _| project.add_entity(entity, &actor)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "id": new_id }))).into_response())
}

async fn advance(State(state): State<Shared>, Path(id): Path<String>, RequestActor(actor): RequestActor) -> ApiResult<Json<Value>> {
    let stage = mutate(&state, &id, move |st, project, _| pipeline::advance_stage_with(project, &actor, &st.catalog)).await?;
    Ok(Json(json!({ "stage": stage })))
}

#[derive(Deserialize)]
struct ReopenBody {
    stage: Stage,
}

async fn reopen_stage(
    State(state): State<Shared>,
    Path(id): Path<String>,
    RequestActor(actor): RequestActor,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let body: ReopenBody = parse_body(&body)?;
    let stage = mutate(&state, &id, move |_, project, _| reopen(project, body.stage, &actor)).await?;
    Ok(Json(json!({ "stage": stage })))
}

async fn validation(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<ValidationReport>> {
    read(&state, &id, |st, f| Ok(Json(pipeline::validate_with(&f.into_project(), &st.catalog)))).await
}

async fn project_metrics(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<CoverageMetrics>> {
    read(&state, &id, |st, f| Ok(Json(pipeline::metrics_with(&f.into_project(), &st.catalog)))).await
}

async fn audit(State(state): State<Shared>, Path(id): Path<String>, Query(filter): Query<AuditFilter>) -> ApiResult<Json<Value>> {
    read(&state, &id, move |_, f| {
        let project = f.into_project();
        let entries: Vec<&AuditEntry> = project.audit.query(&filter);
        Ok(Json(json!({
            "verification": project.audit.verify(),
            "total": project.audit.len(),
            "entries": entries,
        })))
    })
    .await
}

#[derive(Deserialize)]
struct ReportQuery {
    #[serde(default)]
    format: Option<String>,
}

async fn report(State(state): State<Shared>, Path(id): Path<String>, Query(q): Query<ReportQuery>) -> ApiResult<Response> {
    let format: ReportFormat = q.format.as_deref().unwrap_or("markdown").parse()?;
    let text = read(&state, &id, move |_, f| Ok(export_report(&f.into_project(), format))).await?;
    let content_type = match format {
        ReportFormat::Markdown => "text/markdown; charset=utf-8",
        ReportFormat::Csv => "text/csv; charset=utf-8",
        ReportFormat::Json => "application/json",
    };
    Ok(([(header::CONTENT_TYPE, content_type)], text).into_response())
}

async fn trace(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    read(&state, &id, |_, f| {
        let project = f.into_project();
        Ok(Json(json!({ "links": project.trace_links(), "matrix": project.trace_matrix() })))
    })
    .await
}

#[derive(Deserialize)]
struct PathQuery {
    requirement: String,
    goal: String,
}

async fn trace_path(State(state): State<Shared>, Path(id): Path<String>, Query(q): Query<PathQuery>) -> ApiResult<Json<Value>> {
    read(&state, &id, move |_, f| {
        let project = f.into_project();
        for known in [&q.requirement, &q.goal] {
            if project.resolve(known).is_none() {
                return Err(HaraError::UnknownEntity(known.clone()).into());
            }
        }
        Ok(Json(json!({ "path": project.trace_path(&q.requirement, &q.goal) })))
    })
    .await
}
