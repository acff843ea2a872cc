//! Final prompt assembly and answer generation.
//!
//! Context goes strictly before the question: long contexts otherwise push
//! the model into answering the right subject with the wrong attribute.
//! Infrastructure failures never surface as answers — they map to the
//! missing response, because a wrong confident answer scores -1 while a
//! miss scores 0.

use serde::{Deserialize, Serialize};

use crate::ingest::{Sample, TaskKind};
use crate::llm::{AdapterId, ChatRequest, LlmClient};
use crate::prompts;
use crate::rankers::ScoredCandidate;
use crate::segmenter::SegmentOrigin;

/// Knobs for prompt assembly and miss detection.
#[derive(Debug, Clone)]
pub struct GenerationConfig {
    /// Hard cap on rendered prompt characters; worst-ranked context blocks
    /// are dropped first to fit.
    pub prompt_char_cap: usize,
    /// Normalized phrasings that count as a missing answer.
    pub miss_phrases: Vec<String>,
    pub max_tokens: u32,
    /// Ablation switch: route every task to the base adapter.
    pub use_base_adapter: bool,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            prompt_char_cap: 12_000,
            miss_phrases: prompts::DEFAULT_MISS_PHRASES
                .iter()
                .map(|s| s.to_string())
                .collect(),
            max_tokens: 256,
            use_base_adapter: false,
        }
    }
}

/// A fully rendered prompt plus the pieces it was built from.
#[derive(Debug, Clone)]
pub struct PromptBundle {
    pub context_blocks: Vec<String>,
    pub question: String,
    pub query_time: String,
    pub task: TaskKind,
    pub rendered: String,
}

/// Builds the standard prompt: numbered context blocks best-first, then the
/// question, then the answer instruction. Task 1 bundles never contain
/// API-response segments.
pub fn assemble_prompt(
    candidates: &[ScoredCandidate],
    sample: &Sample,
    config: &GenerationConfig,
) -> PromptBundle {
    assemble_prompt_with_instruction(candidates, sample, config, prompts::ANSWER_INSTRUCTION)
}

/// Same assembly with a caller-chosen instruction line (curation uses an
/// always-answer variant).
pub fn assemble_prompt_with_instruction(
    candidates: &[ScoredCandidate],
    sample: &Sample,
    config: &GenerationConfig,
    instruction: &str,
) -> PromptBundle {
    let mut blocks: Vec<String> = candidates
        .iter()
        .filter(|c| sample.task != TaskKind::Task1 || c.segment.origin != SegmentOrigin::ApiResponse)
        .map(|c| c.segment.text.clone())
        .collect();

    let mut rendered = render(&blocks, sample, instruction);
    while rendered.chars().count() > config.prompt_char_cap && !blocks.is_empty() {
        blocks.pop();
        rendered = render(&blocks, sample, instruction);
    }

    PromptBundle {
        context_blocks: blocks,
        question: sample.question.clone(),
        query_time: sample.query_time.clone(),
        task: sample.task,
        rendered,
    }
}

fn render(blocks: &[String], sample: &Sample, instruction: &str) -> String {
    let mut out = format!("Query time: {}\n\n", sample.query_time);
    if !blocks.is_empty() {
        out.push_str("Context:\n");
        for (i, block) in blocks.iter().enumerate() {
            out.push_str(&format!("[{}] {}\n", i + 1, block));
        }
        out.push('\n');
    }
    out.push_str(&format!("Question: {}\n{}", sample.question, instruction));
    out
}

/// Task to adapter: each task answers with its own adapter unless the
/// ablation switch routes everything to base.
pub fn select_adapter(task: TaskKind, use_base_adapter: bool) -> AdapterId {
    if use_base_adapter {
        AdapterId::base()
    } else {
        AdapterId::task_qa(task)
    }
}

/// Lowercases, collapses whitespace runs, and strips trailing punctuation.
/// Idempotent.
pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let mut out = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    loop {
        let stripped = out
            .trim_end_matches(['.', '!', '?', ',', ';', ':'])
            .trim_end();
        if stripped.len() == out.len() {
            break;
        }
        out.truncate(stripped.len());
    }
    out
}

/// Whether a normalized answer is an explicit miss.
pub fn is_missing(normalized: &str, miss_phrases: &[String]) -> bool {
    miss_phrases.iter().any(|phrase| normalized == phrase)
}

/// A generated answer with its normalized form and miss flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub sample_id: String,
    pub raw_text: String,
    pub normalized: String,
    pub is_miss: bool,
}

impl AnswerRecord {
    pub fn from_raw(sample_id: &str, raw_text: String, miss_phrases: &[String]) -> Self {
        let normalized = normalize_answer(&raw_text);
        let is_miss = is_missing(&normalized, miss_phrases);
        AnswerRecord {
            sample_id: sample_id.to_string(),
            raw_text,
            normalized,
            is_miss,
        }
    }

    /// Fail-closed record for an infrastructure failure: the raw text
    /// records the error class, the normalized answer is the canonical
    /// miss so downstream scoring counts it as missing, never hallucinated.
    pub fn from_error(sample_id: &str, error_class: &str) -> Self {
        AnswerRecord {
            sample_id: sample_id.to_string(),
            raw_text: format!("[error] {error_class}"),
            normalized: prompts::MISS_TARGET.to_string(),
            is_miss: true,
        }
    }
}

/// One chat call through the task's adapter, normalized. Chat errors become
/// miss records rather than propagating.
pub async fn generate_answer(
    llm: &LlmClient,
    bundle: &PromptBundle,
    sample_id: &str,
    adapter: AdapterId,
    config: &GenerationConfig,
) -> AnswerRecord {
    let request = ChatRequest::new(adapter, &bundle.rendered)
        .with_system(prompts::ANSWER_SYSTEM_PROMPT)
        .with_max_tokens(config.max_tokens);
    match llm.chat(&request).await {
        Ok(response) => AnswerRecord::from_raw(sample_id, response.text, &config.miss_phrases),
        Err(e) => AnswerRecord::from_error(sample_id, e.class()),
    }
}
