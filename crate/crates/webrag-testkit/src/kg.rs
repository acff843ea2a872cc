//! Knowledge-graph API stub: canned bodies keyed by (path, canonical args).

use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::any;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::{record, spawn_router, RecordedRequest, StubError, StubHandle};

/// One canned endpoint response. A request hits the fixture when its path
/// matches exactly and its canonical argument values equal `args` — query
/// parameter values in order for GET, JSON object values in key order for
/// POST.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KgFixture {
    pub path: String,
    #[serde(default)]
    pub args: Vec<String>,
    pub body: Value,
    #[serde(default)]
    pub delay_ms: u64,
}

impl KgFixture {
    pub fn new(path: &str, args: &[&str], body: Value) -> Self {
        KgFixture {
            path: path.to_string(),
            args: args.iter().map(|a| a.to_string()).collect(),
            body,
            delay_ms: 0,
        }
    }

    pub fn with_delay(mut self, delay_ms: u64) -> Self {
        self.delay_ms = delay_ms;
        self
    }
}

/// Exact-match fixture server: registered (path, args) return 200 with the
/// canned body, everything else returns 404.
pub struct StubKg {
    fixtures: Vec<KgFixture>,
}

struct KgState {
    fixtures: Vec<KgFixture>,
    log: crate::RequestLog,
}

impl StubKg {
    pub fn new(fixtures: Vec<KgFixture>) -> Self {
        StubKg { fixtures }
    }

    pub async fn serve(self, port: u16) -> Result<StubHandle, StubError> {
        let log: crate::RequestLog = Arc::new(Mutex::new(Vec::new()));
        let state = Arc::new(KgState {
            fixtures: self.fixtures,
            log: log.clone(),
        });
        let router = Router::new()
            .route("/{*path}", any(kg_handler))
            .with_state(state);
        spawn_router(router, port, log).await
    }
}

async fn kg_handler(
    State(state): State<Arc<KgState>>,
    method: Method,
    Path(path): Path<String>,
    Query(query): Query<Vec<(String, String)>>,
    body: Bytes,
) -> Response {
    let path = format!("/{path}");
    let args = if method == Method::GET {
        query.into_iter().map(|(_, value)| value).collect()
    } else {
        canonical_body_args(&body)
    };
    record(
        &state.log,
        RecordedRequest {
            path: path.clone(),
            model: None,
            content: args.join(","),
        },
    );

    let hit = state
        .fixtures
        .iter()
        .find(|fixture| fixture.path == path && fixture.args == args);
    match hit {
        Some(fixture) => {
            if fixture.delay_ms > 0 {
                tokio::time::sleep(std::time::Duration::from_millis(fixture.delay_ms)).await;
            }
            Json(fixture.body.clone()).into_response()
        }
        None => (StatusCode::NOT_FOUND, "no fixture for request").into_response(),
    }
}

/// POST bodies canonicalize to their object values in sorted-key order.
fn canonical_body_args(body: &Bytes) -> Vec<String> {
    let Ok(value) = serde_json::from_slice::<Value>(body) else {
        return Vec::new();
    };
    match value {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            entries
                .into_iter()
                .map(|(_, v)| match v {
                    Value::String(s) => s,
                    other => other.to_string(),
                })
                .collect()
        }
        _ => Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn post_bodies_canonicalize_sorted_by_key() {
        let body = Bytes::from(r#"{"b": 2, "a": "x"}"#);
        assert_eq!(canonical_body_args(&body), vec!["x".to_string(), "2".to_string()]);
    }
}
