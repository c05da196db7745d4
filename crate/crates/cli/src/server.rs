//! Read-only HTTP JSON API over one loaded store.
//!
//! | Method | Path               | Body / result                                  |
//! |--------|--------------------|------------------------------------------------|
//! | GET    | `/health`          | `{"status":"ok","chunks":N}`                   |
//! | POST   | `/api/chat`        | `{query, k?}` -> `{answer, citations, ...}`    |
//! | GET    | `/api/documents`   | documents with their chunk counts              |
//! | GET    | `/api/chunks/{id}` | one chunk with full text, 404 when unknown     |
//! | GET    | `/api/predefined`  | starter questions from the configuration       |
//!
//! Errors are `{"error": {"code": "...", "message": "..."}}` with a 4xx/5xx
//! status. Answering runs on the blocking pool because the model and
//! embedding clients are synchronous.

use std::collections::BTreeMap;
use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower::limit::ConcurrencyLimitLayer;
use tower_http::cors::CorsLayer;
use tracing::{error, info, warn};
use urobot_core::corpus::Chunk;
use urobot_core::llm::GatewayError;
use urobot_core::rag::{Citation, PromptMode, RagEngine, RagError};
use urobot_core::store::VectorStore;

use crate::config::{AppConfig, ServerConfig};
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatApiRequest {
    pub query: String,
    #[serde(default)]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiCitation {
    pub chunk_id: u64,
    pub doc_key: String,
    pub page: u32,
    pub snippet: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatApiResponse {
    pub answer: String,
    pub citations: Vec<ApiCitation>,
    /// True when the answer cited nothing usable and the top retrieved
    /// chunks are shown instead.
    pub citations_fallback: bool,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentInfo {
    pub doc_key: String,
    pub title: String,
    pub chunks: usize,
}

#[derive(Clone)]
pub struct AppState {
    engine: Arc<RagEngine>,
    store: Arc<VectorStore>,
    predefined: Arc<Vec<String>>,
    max_k: usize,
}

impl AppState {
    pub fn new(engine: RagEngine, store: Arc<VectorStore>, server: &ServerConfig) -> Self {
        AppState {
            engine: Arc::new(engine),
            store,
            predefined: Arc::new(server.predefined_questions.clone()),
            max_k: server.max_k,
        }
    }

    /// Loads the configured store and builds the engine over it.
    pub fn from_config(cfg: &AppConfig) -> Result<Self, CliError> {
        let dir = &cfg.store_path;
        if !dir.join("manifest.json").is_file() {
            return Err(CliError::Config(format!(
                "no vector store at {}",
                dir.display()
            )));
        }
        let store = Arc::new(VectorStore::load(dir)?);
        let engine = RagEngine::from_config(&cfg.rag, Some(store.clone()))?;
        Ok(AppState::new(engine, store, &cfg.server))
    }
}

pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({"error": {"code": self.code, "message": self.message}});
        (self.status, Json(body)).into_response()
    }
}

impl From<RagError> for ApiError {
    fn from(e: RagError) -> Self {
        let (status, code) = match &e {
            RagError::EmptyQuery => (StatusCode::BAD_REQUEST, "empty_query"),
            RagError::NoContext => (StatusCode::SERVICE_UNAVAILABLE, "no_context"),
            RagError::Gateway(GatewayError::RateLimitedExhausted { .. }) => {
                (StatusCode::SERVICE_UNAVAILABLE, "provider_rate_limited")
            }
            RagError::Gateway(_) | RagError::Embedding(_) => {
                (StatusCode::BAD_GATEWAY, "provider_error")
            }
            RagError::InvalidConfig(_) | RagError::Store(_) => {
                (StatusCode::INTERNAL_SERVER_ERROR, "internal_error")
            }
        };
        ApiError::new(status, code, e.to_string())
    }
}

pub fn router(state: AppState, server: &ServerConfig) -> Router {
    let mut app = Router::new()
        .route("/health", get(health))
        .route("/api/chat", post(chat))
        .route("/api/documents", get(documents))
        .route("/api/chunks/{id}", get(chunk))
        .route("/api/predefined", get(predefined))
        .with_state(state)
        .layer(ConcurrencyLimitLayer::new(server.max_in_flight));
    let origins: Vec<HeaderValue> = server
        .cors_origins
        .iter()
        .filter_map(|o| match HeaderValue::from_str(o) {
            Ok(v) => Some(v),
            Err(_) => {
                warn!(origin = %o, "ignoring unparseable CORS origin");
                None
            }
        })
        .collect();
    if !origins.is_empty() {
        app = app.layer(
            CorsLayer::new()
                .allow_origin(origins)
                .allow_methods([Method::GET, Method::POST])
                .allow_headers([axum::http::header::CONTENT_TYPE]),
        );
    }
    app
}

async fn health(State(s): State<AppState>) -> Json<serde_json::Value> {
    Json(serde_json::json!({"status": "ok", "chunks": s.store.len()}))
}

async fn chat(
    State(s): State<AppState>,
    body: Result<Json<ChatApiRequest>, JsonRejection>,
) -> Result<Json<ChatApiResponse>, ApiError> {
    let Json(req) =
        body.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", e.body_text()))?;
    if req.query.trim().is_empty() {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "empty_query",
            "query must not be empty",
        ));
    }
    let k = req.k.unwrap_or(s.engine.k());
    if k == 0 || k > s.max_k {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "invalid_k",
            format!("k must lie in [1, {}]", s.max_k),
        ));
    }

    let started = Instant::now();
    let engine = s.engine.clone();
    let answer = tokio::task::spawn_blocking(move || engine.answer_chat_k(&req.query, k))
        .await
        .map_err(|e| {
            ApiError::new(
                StatusCode::INTERNAL_SERVER_ERROR,
                "internal_error",
                e.to_string(),
            )
        })??;

    let citations: Vec<ApiCitation> = answer
        .citations
        .into_iter()
        .filter(|c| verified(&s.store, c))
        .map(|c| ApiCitation {
            chunk_id: c.chunk_id,
            doc_key: c.doc_key,
            page: c.page,
            snippet: c.snippet,
            score: c.score,
        })
        .collect();
    if s.engine.prompt_mode() == PromptMode::Rag && citations.is_empty() {
        error!("answer has no verifiable citation");
        return Err(ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "citation_check_failed",
            "no citation could be verified against the store",
        ));
    }
    let latency_ms = started.elapsed().as_millis() as u64;
    info!(latency_ms, citations = citations.len(), "chat answered");
    Ok(Json(ChatApiResponse {
        answer: answer.answer_text,
        citations,
        citations_fallback: answer.citations_fallback,
        latency_ms,
    }))
}

/// The snippet must be verbatim text of the cited chunk.
fn verified(store: &VectorStore, c: &Citation) -> bool {
    let ok = store
        .get(c.chunk_id)
        .is_some_and(|r| r.chunk.doc_key == c.doc_key && r.chunk.text.contains(&c.snippet));
    if !ok {
        error!(
            chunk_id = c.chunk_id,
            "dropping citation that does not match the store"
        );
    }
    ok
}

async fn documents(State(s): State<AppState>) -> Json<Vec<DocumentInfo>> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in s.store.records() {
        *counts.entry(r.chunk.doc_key.as_str()).or_default() += 1;
    }
    Json(
        s.store
            .documents()
            .iter()
            .map(|d| DocumentInfo {
                doc_key: d.doc_key.clone(),
                title: d.title.clone(),
                chunks: counts.get(d.doc_key.as_str()).copied().unwrap_or(0),
            })
            .collect(),
    )
}

async fn chunk(State(s): State<AppState>, Path(id): Path<String>) -> Result<Json<Chunk>, ApiError> {
    let id: u64 = id.parse().map_err(|_| {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "invalid_chunk_id",
            format!("{id:?} is not a chunk id"),
        )
    })?;
    s.store
        .get(id)
        .map(|r| Json(r.chunk.clone()))
        .ok_or_else(|| {
            ApiError::new(
                StatusCode::NOT_FOUND,
                "chunk_not_found",
                format!("no chunk {id}"),
            )
        })
}

async fn predefined(State(s): State<AppState>) -> Json<serde_json::Value> {
    Json(serde_json::json!({"questions": *s.predefined}))
}

/// Resolves on Ctrl-C or SIGTERM.
pub async fn termination_signal() {
    let ctrl_c = async {
        if let Err(e) = tokio::signal::ctrl_c().await {
            error!(error = %e, "cannot listen for Ctrl-C");
            std::future::pending::<()>().await;
        }
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(e) => {
                error!(error = %e, "cannot listen for SIGTERM");
                std::future::pending::<()>().await;
            }
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}

/// Serves `app` on `listener` until `shutdown` resolves, then lets in-flight
/// requests finish for at most `drain`.
pub async fn serve_until(
    listener: tokio::net::TcpListener,
    app: Router,
    shutdown: impl Future<Output = ()> + Send + 'static,
    drain: Duration,
) -> std::io::Result<()> {
    let (tx, rx) = tokio::sync::watch::channel(false);
    let signalled = async move {
        shutdown.await;
        info!("shutdown requested; draining in-flight requests");
        let _ = tx.send(true);
    };
    let server = axum::serve(listener, app).with_graceful_shutdown(signalled);
    let deadline = async move {
        let mut rx = rx;
        let _ = rx.wait_for(|s| *s).await;
        tokio::time::sleep(drain).await;
    };
    tokio::select! {
        r = server => r,
        _ = deadline => {
            warn!(?drain, "drain deadline reached; dropping remaining connections");
            Ok(())
        }
    }
}

/// Loads the store, binds the configured address and serves until a
/// termination signal. Startup failures return before any traffic is
/// accepted.
pub async fn serve(cfg: &AppConfig) -> Result<(), CliError> {
    let state = AppState::from_config(cfg)?;
    let chunks = state.store.len();
    let app = router(state, &cfg.server);
    let addr: SocketAddr = format!("{}:{}", cfg.server.bind_address, cfg.server.port)
        .parse()
        .map_err(|e| CliError::Config(format!("bad bind address: {e}")))?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| CliError::Config(format!("cannot bind {addr}: {e}")))?;
    info!(%addr, chunks, "serving");
    serve_until(
        listener,
        app,
        termination_signal(),
        Duration::from_secs(cfg.server.drain_secs),
    )
    .await
    .map_err(|e| CliError::Data(format!("server error: {e}")))
}
