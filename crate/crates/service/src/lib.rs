//! HTTP facade over a loaded policy.
//!
//! | route                                            | response                          |
//! |--------------------------------------------------|-----------------------------------|
//! | `GET /principals`, `/categories`, `/actions`,    | entity list ordered by id         |
//! | `/resources`, `/sites` (each also `/{id}`)       |                                   |
//! | `GET /customFacts`                               | custom fact declarations          |
//! | `GET /customFacts/{factId}/params/{rank}/options`| `[{id, label}]` for a SELECTION   |
//! | `POST /pars`                                     | `{pars, graph, stats}`            |
//!
//! Errors use the envelope `{code, message, details}`. Evaluation time is
//! reported in the `x-elapsed-ms` header so identical requests get
//! byte-identical bodies.

mod error;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{HeaderName, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use gacm_core::config::{load_policy, ConfigErrors, CustomFactDecl, CustomFactRequest, ParamType, PolicyConfig};
use gacm_core::engine::{Engine, EngineError};
use gacm_core::graph::{build_graph, PolicyGraph};
use gacm_core::model::*;

pub use error::ApiError;

pub const ELAPSED_HEADER: &str = "x-elapsed-ms";

/// A policy with its compiled rules. Requests hold an `Arc` to the snapshot
/// they started on, so a reload never affects in-flight evaluations.
#[derive(Debug)]
pub struct Snapshot {
    pub policy: PolicyConfig,
    pub engine: Engine,
}

impl Snapshot {
    pub fn new(policy: PolicyConfig) -> Result<Self, EngineError> {
        let engine = Engine::new(&policy)?;
        Ok(Snapshot { policy, engine })
    }
}

#[derive(Debug)]
pub struct AppState {
    current: RwLock<Arc<Snapshot>>,
    policy_dir: Option<PathBuf>,
}

#[derive(Debug)]
pub enum LoadError {
    Config(ConfigErrors),
    Engine(EngineError),
}

impl std::fmt::Display for LoadError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LoadError::Config(e) => e.fmt(f),
            LoadError::Engine(e) => e.fmt(f),
        }
    }
}

impl std::error::Error for LoadError {}

impl AppState {
    pub fn new(snapshot: Snapshot) -> Self {
        AppState { current: RwLock::new(Arc::new(snapshot)), policy_dir: None }
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, LoadError> {
        let dir = dir.as_ref();
        let policy = load_policy(dir).map_err(LoadError::Config)?;
        let snapshot = Snapshot::new(policy).map_err(LoadError::Engine)?;
        Ok(AppState { current: RwLock::new(Arc::new(snapshot)), policy_dir: Some(dir.to_path_buf()) })
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.current.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn replace(&self, snapshot: Snapshot) {
        *self.current.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(snapshot);
    }

    /// Reloads from the directory the state was loaded from. On failure the
    /// current snapshot stays in place.
    pub fn reload(&self) -> Result<(), LoadError> {
        let Some(dir) = &self.policy_dir else {
            return Ok(());
        };
        let policy = load_policy(dir).map_err(LoadError::Config)?;
        self.replace(Snapshot::new(policy).map_err(LoadError::Engine)?);
        Ok(())
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ParsRequest {
    #[serde(default)]
    pub custom_facts: Vec<CustomFactRequest>,
    #[serde(default)]
    pub priority: Priority,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Stats {
    pub fired_count: usize,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsResponse {
    pub pars: Vec<Par>,
    pub graph: PolicyGraph,
    pub stats: Stats,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptionEntry {
    pub id: EntityId,
    pub label: String,
}

/// Validates and evaluates one request against a snapshot.
pub fn compute_pars(snapshot: &Snapshot, request: &ParsRequest) -> Result<ParsResponse, ApiError> {
    let policy = &snapshot.policy;
    let facts = policy.validate_custom_facts(&request.custom_facts).map_err(|errors| {
        let details: Vec<_> = errors
            .iter()
            .map(|(index, e)| json!({ "index": index, "fact": request.custom_facts[*index].fact, "message": e.to_string() }))
            .collect();
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_custom_facts", "custom fact validation failed")
            .with_details(details.into())
    })?;
    let eval = snapshot.engine.evaluate(policy, &facts, request.priority)?;
    Ok(ParsResponse {
        graph: build_graph(&eval.pars, &policy.registry),
        pars: eval.pars.into_iter().collect(),
        stats: Stats { fired_count: eval.report.fired_count, iterations: eval.report.iterations },
    })
}

type AppResult<T> = Result<T, ApiError>;

fn entity_routes(kind: EntityKind) -> Router<Arc<AppState>> {
    Router::new()
        .route(
            "/",
            get(move |State(s): State<Arc<AppState>>| async move {
                Json(s.snapshot().policy.registry.summaries(kind))
            }),
        )
        .route(
            "/{id}",
            get(move |State(s): State<Arc<AppState>>, UrlPath(id): UrlPath<String>| async move {
                let snap = s.snapshot();
                let found = EntityId::new(&id).ok().and_then(|id| snap.policy.registry.summary(kind, &id));
                found.map(Json).ok_or_else(|| ApiError::not_found(format!("no {kind} with id `{id}`")))
            }),
        )
}

async fn custom_facts(State(s): State<Arc<AppState>>) -> Json<Vec<CustomFactDecl>> {
    let mut decls = s.snapshot().policy.custom_facts.clone();
    for d in &mut decls {
        d.parameters.sort_by_key(|p| p.rank);
    }
    Json(decls)
}

async fn param_options(
    State(s): State<Arc<AppState>>,
    UrlPath((fact, rank)): UrlPath<(String, String)>,
) -> AppResult<Json<Vec<OptionEntry>>> {
    let snap = s.snapshot();
    let decl = snap
        .policy
        .custom_fact(&fact)
        .ok_or_else(|| ApiError::not_found(format!("unknown custom fact `{fact}`")))?;
    let param = rank
        .parse::<u32>()
        .ok()
        .and_then(|r| decl.param(r))
        .ok_or_else(|| ApiError::not_found(format!("`{fact}` has no parameter of rank `{rank}`")))?;
    let kind = match (param.param_type, param.option_type) {
        (ParamType::Selection, Some(kind)) => kind,
        (t, _) => {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "invalid_parameter",
                format!("`{fact}` parameter {rank} is {t}, not SELECTION"),
            ))
        }
    };
    let options = snap
        .policy
        .registry
        .summaries(kind)
        .into_iter()
        .map(|e| OptionEntry { id: e.id, label: e.name })
        .collect();
    Ok(Json(options))
}

async fn pars(State(s): State<Arc<AppState>>, body: Bytes) -> AppResult<Response> {
    let request: ParsRequest = if body.iter().all(u8::is_ascii_whitespace) {
        ParsRequest::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| {
            ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", format!("malformed /pars body: {e}"))
                .with_details(json!({ "line": e.line(), "column": e.column() }))
        })?
    };
    let snap = s.snapshot();
    let started = Instant::now();
    let response = tokio::task::spawn_blocking(move || compute_pars(&snap, &request))
        .await
        .map_err(|e| ApiError::internal(format!("evaluation task failed: {e}")))??;
    let elapsed = started.elapsed().as_millis().to_string();
    let mut resp = Json(response).into_response();
    if let Ok(v) = HeaderValue::from_str(&elapsed) {
        resp.headers_mut().insert(HeaderName::from_static(ELAPSED_HEADER), v);
    }
    Ok(resp)
}

async fn fallback() -> ApiError {
    ApiError::not_found("no such route")
}

/// CORS origins; `None` allows any origin.
pub fn router(state: Arc<AppState>, cors_origins: Option<Vec<HeaderValue>>) -> Router {
    let origin = match cors_origins {
        Some(list) => AllowOrigin::list(list),
        None => AllowOrigin::from(Any),
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers(Any)
        .expose_headers([HeaderName::from_static(ELAPSED_HEADER)]);
    Router::new()
        .nest("/principals", entity_routes(EntityKind::Principal))
        .nest("/categories", entity_routes(EntityKind::Category))
        .nest("/actions", entity_routes(EntityKind::Action))
        .nest("/resources", entity_routes(EntityKind::Resource))
        .nest("/sites", entity_routes(EntityKind::Site))
        .route("/customFacts", get(custom_facts))
        .route("/customFacts/{fact}/params/{rank}/options", get(param_options))
        .route("/pars", post(pars))
        .fallback(fallback)
        .layer(cors)
        .with_state(state)
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub addr: SocketAddr,
    pub policy_dir: PathBuf,
    pub cors_origins: Option<Vec<HeaderValue>>,
}

pub const DEFAULT_ADDR: &str = "127.0.0.1:8080";

impl ServiceConfig {
    /// Reads `GACM_ADDR`, `GACM_POLICY_DIR` and the optional comma-separated
    /// `GACM_CORS_ORIGINS`; explicit arguments win over the environment.
    pub fn resolve(addr: Option<SocketAddr>, policy_dir: Option<PathBuf>) -> Result<Self, String> {
        let addr = match addr {
            Some(a) => a,
            None => {
                let raw = std::env::var("GACM_ADDR").unwrap_or_else(|_| DEFAULT_ADDR.into());
                raw.parse().map_err(|e| format!("GACM_ADDR `{raw}`: {e}"))?
            }
        };
        let policy_dir = policy_dir
            .or_else(|| std::env::var_os("GACM_POLICY_DIR").map(PathBuf::from))
            .ok_or("no policy directory given and GACM_POLICY_DIR is unset")?;
        let cors_origins = match std::env::var("GACM_CORS_ORIGINS") {
            Ok(list) => Some(
                list.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| HeaderValue::from_str(s).map_err(|e| format!("GACM_CORS_ORIGINS `{s}`: {e}")))
                    .collect::<Result<_, _>>()?,
            ),
            Err(_) => None,
        };
        Ok(ServiceConfig { addr, policy_dir, cors_origins })
    }
}

/// Serves until ctrl-c. On unix, SIGHUP reloads the policy directory.
pub async fn serve(config: ServiceConfig) -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
    let state = Arc::new(AppState::load(&config.policy_dir)?);
    let listener = tokio::net::TcpListener::bind(config.addr).await?;
    eprintln!("serving {} on http://{}", config.policy_dir.display(), listener.local_addr()?);
    #[cfg(unix)]
    {
        let state = state.clone();
        let mut hup = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::hangup())?;
        tokio::spawn(async move {
            while hup.recv().await.is_some() {
                match state.reload() {
                    Ok(()) => eprintln!("policy reloaded"),
                    Err(e) => eprintln!("reload failed, keeping the previous policy:\n{e}"),
                }
            }
        });
    }
    axum::serve(listener, router(state, config.cors_origins))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
