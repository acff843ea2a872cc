//! Single client for every generative-model interaction.
//!
//! Adapter switching is expressed as the model-id field of an
//! OpenAI-compatible request: each logical adapter name maps (via
//! configuration, identity by default) to the model identifier sent in
//! `POST {base}/v1/chat/completions`. Transient failures retry with
//! exponential backoff; an in-flight semaphore bounds concurrency.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use tokio::sync::Semaphore;

use crate::ingest::TaskKind;
use crate::prompts;

/// Logical adapter name, resolved to a model id per request.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AdapterId(String);

impl AdapterId {
    pub fn new(name: &str) -> Self {
        assert!(!name.is_empty(), "adapter name must be non-empty");
        AdapterId(name.to_string())
    }

    pub fn name(&self) -> &str {
        &self.0
    }

    pub fn base() -> Self {
        AdapterId::new("base")
    }

    pub fn judge() -> Self {
        AdapterId::new("judge")
    }

    pub fn api_call() -> Self {
        AdapterId::new("api-call")
    }

    /// The per-task answering adapter.
    pub fn task_qa(task: TaskKind) -> Self {
        match task {
            TaskKind::Task1 => AdapterId::new("task1-qa"),
            TaskKind::Task2 => AdapterId::new("task2-qa"),
            TaskKind::Task3 => AdapterId::new("task3-qa"),
        }
    }
}

impl std::fmt::Display for AdapterId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Client tuning. `model_map` overrides the identity adapter-to-model
/// mapping where a serving stack names models differently.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlmConfig {
    pub base_url: String,
    #[serde(default)]
    pub model_map: BTreeMap<String, String>,
    pub timeout_ms: u64,
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub max_inflight: usize,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            base_url: "http://127.0.0.1:8240".to_string(),
            model_map: BTreeMap::new(),
            timeout_ms: 30_000,
            max_attempts: 3,
            initial_backoff_ms: 100,
            max_inflight: 8,
        }
    }
}

/// One chat completion request.
#[derive(Debug, Clone)]
pub struct ChatRequest {
    pub adapter: AdapterId,
    pub system: Option<String>,
    pub user: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub seed: Option<u64>,
}

impl ChatRequest {
    /// Deterministic defaults: temperature 0, fixed seed.
    pub fn new(adapter: AdapterId, user: &str) -> Self {
        debug_assert!(!user.is_empty(), "user prompt must be non-empty");
        ChatRequest {
            adapter,
            system: None,
            user: user.to_string(),
            max_tokens: 256,
            temperature: 0.0,
            seed: Some(0),
        }
    }

    pub fn with_system(mut self, system: &str) -> Self {
        self.system = Some(system.to_string());
        self
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }
}

#[derive(Debug, Clone)]
pub struct ChatResponse {
    pub text: String,
    pub latency_ms: u64,
    pub attempt_count: u32,
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("model endpoint unavailable after {attempts} attempts: {detail}")]
    ServiceUnavailable { attempts: u32, detail: String },
    #[error("model request timed out after {attempts} attempts ({timeout_ms} ms each)")]
    DeadlineExceeded { attempts: u32, timeout_ms: u64 },
    #[error("malformed model response: {detail}")]
    MalformedResponse { detail: String },
}

impl LlmError {
    /// Short class name, used when recording fail-closed answers.
    pub fn class(&self) -> &'static str {
        match self {
            LlmError::ServiceUnavailable { .. } => "ServiceUnavailable",
            LlmError::DeadlineExceeded { .. } => "DeadlineExceeded",
            LlmError::MalformedResponse { .. } => "MalformedResponse",
        }
    }
}

/// Shareable chat client; clones share the in-flight cap.
#[derive(Debug, Clone)]
pub struct LlmClient {
    http: reqwest::Client,
    config: LlmConfig,
    inflight: Arc<Semaphore>,
}

impl LlmClient {
    pub fn new(config: LlmConfig) -> Self {
        let inflight = Arc::new(Semaphore::new(config.max_inflight.max(1)));
        LlmClient {
            http: reqwest::Client::new(),
            config,
            inflight,
        }
    }

    /// Model id for an adapter: mapped if configured, the adapter's own
    /// name otherwise.
    pub fn model_for<'a>(&'a self, adapter: &'a AdapterId) -> &'a str {
        self.config
            .model_map
            .get(adapter.name())
            .map(String::as_str)
            .unwrap_or(adapter.name())
    }

    /// Sends one completion request, retrying transport errors and 5xx
    /// responses with exponential backoff up to the attempt cap. Returns
    /// the trimmed completion text.
    pub async fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let _permit = self.inflight.acquire().await.expect("semaphore never closed");
        let url = format!("{}/v1/chat/completions", self.config.base_url.trim_end_matches('/'));

        let mut messages = Vec::new();
        if let Some(system) = &request.system {
            messages.push(json!({"role": "system", "content": system}));
        }
        messages.push(json!({"role": "user", "content": request.user}));
        let mut body = json!({
            "model": self.model_for(&request.adapter),
            "messages": messages,
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
        });
        if let Some(seed) = request.seed {
            body["seed"] = json!(seed);
        }

        let started = Instant::now();
        let max_attempts = self.config.max_attempts.max(1);
        let mut last_was_timeout = false;
        let mut last_detail = String::new();

        for attempt in 1..=max_attempts {
            match self
                .http
                .post(&url)
                .timeout(Duration::from_millis(self.config.timeout_ms))
                .json(&body)
                .send()
                .await
            {
                Ok(response) => {
                    let status = response.status();
                    if status.is_success() {
                        let value: Value = response.json().await.map_err(|e| {
                            LlmError::MalformedResponse { detail: e.to_string() }
                        })?;
                        let text = extract_content(&value)?;
                        return Ok(ChatResponse {
                            text,
                            latency_ms: started.elapsed().as_millis() as u64,
                            attempt_count: attempt,
                        });
                    }
                    if status.is_server_error() {
                        last_was_timeout = false;
                        last_detail = format!("http status {status}");
                    } else {
                        return Err(LlmError::MalformedResponse {
                            detail: format!("http status {status}"),
                        });
                    }
                }
                Err(e) => {
                    last_was_timeout = e.is_timeout();
                    last_detail = e.to_string();
                }
            }
            if attempt < max_attempts {
                let backoff = self.config.initial_backoff_ms << (attempt - 1);
                tokio::time::sleep(Duration::from_millis(backoff)).await;
            }
        }

        if last_was_timeout {
            Err(LlmError::DeadlineExceeded {
                attempts: max_attempts,
                timeout_ms: self.config.timeout_ms,
            })
        } else {
            Err(LlmError::ServiceUnavailable {
                attempts: max_attempts,
                detail: last_detail,
            })
        }
    }

    /// Asks the judge adapter whether `candidate` answers `question` the
    /// same way `ground_truth` does. Only a leading "yes" counts as
    /// correct; unparseable output is conservatively incorrect.
    pub async fn judge_correct(
        &self,
        question: &str,
        ground_truth: &str,
        candidate: &str,
    ) -> Result<bool, LlmError> {
        debug_assert!(!ground_truth.is_empty(), "ground truth must be non-empty");
        let prompt = prompts::render_judge_prompt(question, ground_truth, candidate);
        let request = ChatRequest::new(AdapterId::judge(), &prompt).with_max_tokens(8);
        let response = self.chat(&request).await?;
        Ok(parse_yes(&response.text))
    }
}

fn extract_content(value: &Value) -> Result<String, LlmError> {
    value
        .get("choices")
        .and_then(Value::as_array)
        .and_then(|choices| choices.first())
        .and_then(|choice| choice.get("message"))
        .and_then(|message| message.get("content"))
        .and_then(Value::as_str)
        .map(|text| text.trim().to_string())
        .ok_or_else(|| LlmError::MalformedResponse {
            detail: "missing choices[0].message.content".to_string(),
        })
}

/// True iff the first alphabetic word of the reply is "yes" (any case).
fn parse_yes(text: &str) -> bool {
    let first_word: String = text
        .trim_start_matches(|c: char| !c.is_alphabetic())
        .chars()
        .take_while(|c| c.is_alphabetic())
        .collect();
    first_word.eq_ignore_ascii_case("yes")
}
