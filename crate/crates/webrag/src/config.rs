//! Run configuration: defaults, TOML file loading, environment overrides.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::JudgeMode;
use crate::ingest::TaskKind;
use crate::prompts;
use crate::rankers::RankerKind;

/// Base URLs for the four external services.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Endpoints {
    pub llm: String,
    pub embed: String,
    pub cross: String,
    pub kg: String,
}

impl Default for Endpoints {
    fn default() -> Self {
        Endpoints {
            llm: "http://127.0.0.1:8240".to_string(),
            embed: "http://127.0.0.1:8241".to_string(),
            cross: "http://127.0.0.1:8242".to_string(),
            kg: "http://127.0.0.1:8243".to_string(),
        }
    }
}

/// Everything a pipeline run needs. TOML config files deserialize into this
/// shape; command-line flags and `WEBRAG_*_URL` environment variables
/// override individual fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub task: TaskKind,
    pub input: PathBuf,
    pub output_dir: PathBuf,
    /// Ranking strategy; the cross-encoder ships as the default.
    pub ranker: RankerKind,
    pub top_k: usize,
    /// Cumulative character budget across selected segments.
    pub char_budget: usize,
    /// Segment threshold; every segment is strictly shorter than this.
    pub max_segment_chars: usize,
    /// Samples processed concurrently.
    pub parallelism: usize,
    pub per_sample_deadline_ms: u64,
    pub endpoints: Endpoints,
    pub judge_mode: JudgeMode,
    /// Ablation switch: answer with the base adapter for every task.
    pub use_base_adapter: bool,
    pub prompt_char_cap: usize,
    pub max_tokens: u32,
    pub miss_phrases: Vec<String>,
    /// Seed for deterministic subset selection.
    pub seed: u64,
    /// Knowledge-graph function registry; required for Tasks 2 and 3.
    pub registry_path: Option<PathBuf>,
    pub llm_timeout_ms: u64,
    pub llm_max_attempts: u32,
    pub llm_backoff_ms: u64,
    pub llm_max_inflight: usize,
    /// Batch size for embedding and cross-encoder requests.
    pub scorer_batch_size: usize,
    pub scorer_timeout_ms: u64,
    pub kg_timeout_ms: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: TaskKind::Task1,
            input: PathBuf::new(),
            output_dir: PathBuf::from("out"),
            ranker: RankerKind::CrossEncoder,
            top_k: 10,
            char_budget: 8_000,
            max_segment_chars: 2_000,
            parallelism: 4,
            per_sample_deadline_ms: 30_000,
            endpoints: Endpoints::default(),
            judge_mode: JudgeMode::ExactMatch,
            use_base_adapter: false,
            prompt_char_cap: 12_000,
            max_tokens: 256,
            miss_phrases: prompts::DEFAULT_MISS_PHRASES
                .iter()
                .map(|s| s.to_string())
                .collect(),
            seed: 0,
            registry_path: None,
            llm_timeout_ms: 30_000,
            llm_max_attempts: 3,
            llm_backoff_ms: 100,
            llm_max_inflight: 8,
            scorer_batch_size: 32,
            scorer_timeout_ms: 30_000,
            kg_timeout_ms: 10_000,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {detail}")]
    Unreadable { path: String, detail: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

impl RunConfig {
    /// Loads a TOML config file. Missing keys take their defaults.
    pub fn from_toml_file(path: &std::path::Path) -> Result<Self, ConfigError> {
        let data = std::fs::read_to_string(path).map_err(|e| ConfigError::Unreadable {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        toml::from_str(&data).map_err(|e| ConfigError::Unreadable {
            path: path.display().to_string(),
            detail: e.to_string(),
        })
    }

    /// Applies `WEBRAG_LLM_URL`, `WEBRAG_EMBED_URL`, `WEBRAG_CROSS_URL`,
    /// and `WEBRAG_KG_URL` when set.
    pub fn apply_env(&mut self) {
        if let Ok(url) = std::env::var("WEBRAG_LLM_URL") {
            self.endpoints.llm = url;
        }
        if let Ok(url) = std::env::var("WEBRAG_EMBED_URL") {
            self.endpoints.embed = url;
        }
        if let Ok(url) = std::env::var("WEBRAG_CROSS_URL") {
            self.endpoints.cross = url;
        }
        if let Ok(url) = std::env::var("WEBRAG_KG_URL") {
            self.endpoints.kg = url;
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.parallelism == 0 {
            return Err(ConfigError::Invalid("parallelism must be at least 1".into()));
        }
        if self.per_sample_deadline_ms == 0 {
            return Err(ConfigError::Invalid(
                "per_sample_deadline_ms must be positive".into(),
            ));
        }
        if self.max_segment_chars < 2 {
            return Err(ConfigError::Invalid(
                "max_segment_chars must be at least 2".into(),
            ));
        }
        if self.task.uses_kg() && self.registry_path.is_none() {
            return Err(ConfigError::Invalid(format!(
                "{} uses the knowledge graph; registry_path is required",
                self.task
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn defaults_ship_cross_encoder_and_thirty_second_deadline() {
        let config = RunConfig::default();
        assert_eq!(config.ranker, RankerKind::CrossEncoder);
        assert_eq!(config.per_sample_deadline_ms, 30_000);
        assert_eq!(config.max_segment_chars, 2_000);
        assert_eq!(config.top_k, 10);
        assert_eq!(config.char_budget, 8_000);
    }

    #[test]
    fn toml_overrides_selected_fields() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            file,
            "task = \"task2\"\nranker = \"tfidf\"\ntop_k = 3\n\n[endpoints]\nllm = \"http://10.0.0.1:9000\"\n"
        )
        .unwrap();
        file.flush().unwrap();
        let config = RunConfig::from_toml_file(file.path()).unwrap();
        assert_eq!(config.task, TaskKind::Task2);
        assert_eq!(config.ranker, RankerKind::Tfidf);
        assert_eq!(config.top_k, 3);
        assert_eq!(config.endpoints.llm, "http://10.0.0.1:9000");
        // untouched keys keep defaults
        assert_eq!(config.char_budget, 8_000);
    }

    #[test]
    fn validation_rejects_zero_parallelism_and_missing_registry() {
        let config = RunConfig {
            parallelism: 0,
            ..RunConfig::default()
        };
        assert!(config.validate().is_err());

        let config = RunConfig {
            task: TaskKind::Task2,
            registry_path: None,
            ..RunConfig::default()
        };
        assert!(config.validate().is_err());

        let config = RunConfig {
            task: TaskKind::Task2,
            registry_path: Some(PathBuf::from("registry.json")),
            ..RunConfig::default()
        };
        assert!(config.validate().is_ok());
    }
}
