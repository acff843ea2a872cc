//! OpenAI-compatible chat completion stub.

use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::routing::post;
use axum::{Json, Router};
use regex::Regex;
use serde_json::{json, Value};

use crate::{record, spawn_router, RecordedRequest, StubError, StubHandle, StubRule};

/// Deterministic chat stub. Rules are tried first (regex over the last user
/// message, first match wins, templates may expand capture groups); if
/// enabled, a built-in equality judge answers grading prompts; anything else
/// echoes the last non-empty user line.
pub struct StubLlm {
    rules: Vec<StubRule>,
    judge_equality: bool,
    #[allow(dead_code)]
    seed: u64,
}

struct LlmState {
    rules: Vec<(Regex, StubRule)>,
    judge_equality: bool,
    log: crate::RequestLog,
}

impl StubLlm {
    pub fn new(seed: u64) -> Self {
        StubLlm {
            rules: Vec::new(),
            judge_equality: false,
            seed,
        }
    }

    pub fn with_rules(mut self, rules: Vec<StubRule>) -> Self {
        self.rules = rules;
        self
    }

    pub fn rule(mut self, rule: StubRule) -> Self {
        self.rules.push(rule);
        self
    }

    /// Answer judge prompts ("Reference answer: .. / Candidate answer: ..")
    /// with "yes" exactly when the two lines are equal. Runs after the
    /// explicit rules, before the echo fallback.
    pub fn judge_equality(mut self) -> Self {
        self.judge_equality = true;
        self
    }

    /// Binds on 127.0.0.1; port 0 picks an ephemeral port.
    pub async fn serve(self, port: u16) -> Result<StubHandle, StubError> {
        let compiled = self
            .rules
            .into_iter()
            .map(|rule| {
                let regex = Regex::new(&rule.pattern)
                    .unwrap_or_else(|e| panic!("bad stub rule {:?}: {e}", rule.pattern));
                (regex, rule)
            })
            .collect();
        let log: crate::RequestLog = Arc::new(Mutex::new(Vec::new()));
        let state = Arc::new(LlmState {
            rules: compiled,
            judge_equality: self.judge_equality,
            log: log.clone(),
        });
        let router = Router::new()
            .route("/v1/chat/completions", post(chat_handler))
            .with_state(state);
        spawn_router(router, port, log).await
    }
}

async fn chat_handler(State(state): State<Arc<LlmState>>, Json(body): Json<Value>) -> Json<Value> {
    let model = body
        .get("model")
        .and_then(Value::as_str)
        .map(str::to_string);
    let content = last_user_message(&body);
    record(
        &state.log,
        RecordedRequest {
            path: "/v1/chat/completions".to_string(),
            model,
            content: content.clone(),
        },
    );

    let mut delay_ms = 0;
    let text = 'resolve: {
        for (regex, rule) in &state.rules {
            if let Some(captures) = regex.captures(&content) {
                let mut expanded = String::new();
                captures.expand(&rule.response, &mut expanded);
                delay_ms = rule.delay_ms;
                break 'resolve expanded;
            }
        }
        if state.judge_equality {
            if let Some(verdict) = judge_by_equality(&content) {
                break 'resolve verdict;
            }
        }
        echo_last_line(&content)
    };

    if delay_ms > 0 {
        tokio::time::sleep(std::time::Duration::from_millis(delay_ms)).await;
    }

    Json(json!({
        "choices": [{"message": {"role": "assistant", "content": text}}]
    }))
}

fn last_user_message(body: &Value) -> String {
    body.get("messages")
        .and_then(Value::as_array)
        .map(|messages| {
            messages
                .iter()
                .filter(|m| m.get("role").and_then(Value::as_str) == Some("user"))
                .filter_map(|m| m.get("content").and_then(Value::as_str))
                .next_back()
                .unwrap_or_default()
                .to_string()
        })
        .unwrap_or_default()
}

fn echo_last_line(content: &str) -> String {
    content
        .lines()
        .rev()
        .map(str::trim)
        .find(|line| !line.is_empty())
        .unwrap_or_default()
        .to_string()
}

fn judge_by_equality(content: &str) -> Option<String> {
    let reference = content
        .lines()
        .find_map(|line| line.strip_prefix("Reference answer: "))?;
    let candidate = content
        .lines()
        .find_map(|line| line.strip_prefix("Candidate answer: "))?;
    Some(if reference.trim() == candidate.trim() {
        "yes".to_string()
    } else {
        "no".to_string()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_picks_last_non_empty_line() {
        assert_eq!(echo_last_line("a\nb\n\n  \n"), "b");
        assert_eq!(echo_last_line(""), "");
    }

    #[test]
    fn equality_judge_compares_lines() {
        let prompt = "Question: q\nReference answer: 42\nCandidate answer: 42\nReply yes or no.";
        assert_eq!(judge_by_equality(prompt).unwrap(), "yes");
        let prompt = "Question: q\nReference answer: 42\nCandidate answer: 41\nReply yes or no.";
        assert_eq!(judge_by_equality(prompt).unwrap(), "no");
        assert!(judge_by_equality("no markers here").is_none());
    }
}
