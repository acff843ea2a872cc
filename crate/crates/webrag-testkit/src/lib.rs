//! Deterministic stub servers for hermetic pipeline tests.
//!
//! Four servers mirror the production wire contracts exactly, so the real
//! client code paths run unmodified against them:
//!
//! - [`StubLlm`] — OpenAI-compatible `POST /v1/chat/completions`
//! - [`StubEmbed`] — `POST /embed`, seeded hash vectors
//! - [`StubCross`] — `POST /score`, token-overlap or canned scores
//! - [`StubKg`] — canned bodies keyed by (path, canonical args)
//!
//! Responses depend only on request content plus the configured rules and
//! seed, so identical runs produce identical bytes regardless of timing or
//! concurrency. Every server records the requests it saw for in-process
//! assertions.

mod cross;
mod embed;
pub mod fixtures;
mod kg;
mod llm;

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use tokio::sync::oneshot;

pub use cross::{token_overlap, CrossMode, StubCross};
pub use embed::{hash_vector, StubEmbed};
pub use kg::{KgFixture, StubKg};
pub use llm::StubLlm;

/// One matching rule: a regex over the request content and a response
/// template that may reference capture groups (`$1`, `$2`, ...). Rules are
/// tried in order, first match wins; an implicit default always exists.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StubRule {
    /// Regex matched against the request content.
    pub pattern: String,
    /// Response template; capture groups from the pattern expand here.
    pub response: String,
    /// Milliseconds to sleep before responding.
    #[serde(default)]
    pub delay_ms: u64,
}

impl StubRule {
    pub fn new(pattern: &str, response: &str) -> Self {
        StubRule {
            pattern: pattern.to_string(),
            response: response.to_string(),
            delay_ms: 0,
        }
    }

    pub fn with_delay(mut self, delay_ms: u64) -> Self {
        self.delay_ms = delay_ms;
        self
    }
}

/// A request a stub server has seen, reduced to the fields tests assert on.
#[derive(Debug, Clone)]
pub struct RecordedRequest {
    pub path: String,
    /// Model id from chat requests; `None` for the other stubs.
    pub model: Option<String>,
    /// LLM: last user message. Embed: texts joined by newlines.
    /// Cross: query then passages. KG: canonical args joined by commas.
    pub content: String,
}

pub(crate) type RequestLog = Arc<Mutex<Vec<RecordedRequest>>>;

/// Handle to a running stub. Dropping it shuts the server down.
pub struct StubHandle {
    addr: SocketAddr,
    requests: RequestLog,
    shutdown: Option<oneshot::Sender<()>>,
}

impl StubHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Base URL, e.g. `http://127.0.0.1:49152`.
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Snapshot of every request seen so far.
    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.requests.lock().unwrap().clone()
    }

    pub fn request_count(&self) -> usize {
        self.requests.lock().unwrap().len()
    }
}

impl Drop for StubHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}

/// Stub startup failure (typically the port is already in use).
#[derive(Debug)]
pub enum StubError {
    Bind(std::io::Error),
}

impl std::fmt::Display for StubError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StubError::Bind(e) => write!(f, "cannot bind stub server: {e}"),
        }
    }
}

impl std::error::Error for StubError {}

pub(crate) async fn spawn_router(
    router: axum::Router,
    port: u16,
    requests: RequestLog,
) -> Result<StubHandle, StubError> {
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port))
        .await
        .map_err(StubError::Bind)?;
    let addr = listener.local_addr().map_err(StubError::Bind)?;
    let (tx, rx) = oneshot::channel();
    tokio::spawn(async move {
        let _ = axum::serve(listener, router)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await;
    });
    Ok(StubHandle {
        addr,
        requests,
        shutdown: Some(tx),
    })
}

pub(crate) fn record(log: &RequestLog, entry: RecordedRequest) {
    log.lock().unwrap().push(entry);
}

/// Serves one fixed JSON body for every POST to any path. Handy for
/// driving client error paths (wrong vector counts, mismatched dims).
pub async fn serve_fixed_json(body: serde_json::Value) -> Result<StubHandle, StubError> {
    use axum::routing::post;
    let log: RequestLog = Arc::new(Mutex::new(Vec::new()));
    let router = axum::Router::new().route(
        "/{*path}",
        post(move || {
            let body = body.clone();
            async move { axum::Json(body) }
        }),
    );
    spawn_router(router, 0, log).await
}

/// Loads stub rules from a JSON file (an array of rule objects).
pub fn load_rules(path: &std::path::Path) -> std::io::Result<Vec<StubRule>> {
    let data = std::fs::read_to_string(path)?;
    serde_json::from_str(&data).map_err(std::io::Error::other)
}

/// Loads knowledge-graph fixtures from a JSON file.
pub fn load_kg_fixtures(path: &std::path::Path) -> std::io::Result<Vec<KgFixture>> {
    let data = std::fs::read_to_string(path)?;
    serde_json::from_str(&data).map_err(std::io::Error::other)
}
