//! Cross-encoder scoring stub.

use std::collections::HashSet;
use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::routing::post;
use axum::{Json, Router};
use regex::Regex;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::{record, spawn_router, RecordedRequest, StubError, StubHandle, StubRule};

/// How the stub scores a (query, passage) pair.
pub enum CrossMode {
    /// shared lowercase tokens / query tokens
    TokenOverlap,
    /// Rules matched against `"{query}\n{passage}"`; the matched template
    /// must render to a number. Unmatched pairs score 0.
    Canned(Vec<StubRule>),
}

/// `POST /score {query, passages} -> {scores}`, one score per passage.
pub struct StubCross {
    mode: CrossMode,
}

struct CrossState {
    mode: CompiledMode,
    log: crate::RequestLog,
}

enum CompiledMode {
    TokenOverlap,
    Canned(Vec<(Regex, StubRule)>),
}

#[derive(Deserialize)]
struct ScoreRequest {
    query: String,
    passages: Vec<String>,
}

impl StubCross {
    pub fn new(mode: CrossMode) -> Self {
        StubCross { mode }
    }

    pub async fn serve(self, port: u16) -> Result<StubHandle, StubError> {
        let mode = match self.mode {
            CrossMode::TokenOverlap => CompiledMode::TokenOverlap,
            CrossMode::Canned(rules) => CompiledMode::Canned(
                rules
                    .into_iter()
                    .map(|rule| {
                        let regex = Regex::new(&rule.pattern)
                            .unwrap_or_else(|e| panic!("bad stub rule {:?}: {e}", rule.pattern));
                        (regex, rule)
                    })
                    .collect(),
            ),
        };
        let log: crate::RequestLog = Arc::new(Mutex::new(Vec::new()));
        let state = Arc::new(CrossState {
            mode,
            log: log.clone(),
        });
        let router = Router::new()
            .route("/score", post(score_handler))
            .with_state(state);
        spawn_router(router, port, log).await
    }
}

async fn score_handler(
    State(state): State<Arc<CrossState>>,
    Json(request): Json<ScoreRequest>,
) -> Json<Value> {
    record(
        &state.log,
        RecordedRequest {
            path: "/score".to_string(),
            model: None,
            content: format!("{}\n{}", request.query, request.passages.join("\n")),
        },
    );
    let scores: Vec<f64> = request
        .passages
        .iter()
        .map(|passage| match &state.mode {
            CompiledMode::TokenOverlap => token_overlap(&request.query, passage),
            CompiledMode::Canned(rules) => {
                let content = format!("{}\n{}", request.query, passage);
                rules
                    .iter()
                    .find_map(|(regex, rule)| {
                        regex.captures(&content).map(|captures| {
                            let mut expanded = String::new();
                            captures.expand(&rule.response, &mut expanded);
                            expanded.trim().parse::<f64>().unwrap_or(0.0)
                        })
                    })
                    .unwrap_or(0.0)
            }
        })
        .collect();
    Json(json!({ "scores": scores }))
}

/// |shared lowercase tokens| / |query tokens|; 0 for an empty query.
pub fn token_overlap(query: &str, passage: &str) -> f64 {
    let query_tokens: HashSet<String> =
        query.to_lowercase().split_whitespace().map(str::to_string).collect();
    if query_tokens.is_empty() {
        return 0.0;
    }
    let passage_tokens: HashSet<String> =
        passage.to_lowercase().split_whitespace().map(str::to_string).collect();
    let shared = query_tokens.intersection(&passage_tokens).count();
    shared as f64 / query_tokens.len() as f64
}
