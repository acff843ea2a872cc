//! Training-data curation for the downstream adapters.
//!
//! Two procedures produce line-delimited training files:
//!
//! 1. **QA relabeling.** For every labeled sample, the base adapter answers
//!    four times — once per ranking strategy — under an always-answer
//!    instruction, and a judge checks each answer against the ground truth.
//!    If any attempt is correct the original label is kept; otherwise the
//!    target becomes "i don't know", so the adapter learns to decline
//!    questions it cannot ground. False-premise questions are the
//!    exception: they always keep their original label.
//!
//! 2. **API-call targets.** The base adapter proposes one call per Task 2/3
//!    sample. Calls that parse and execute are kept verbatim as targets.
//!    Everything else is exported to a review file for human correction;
//!    merged corrections that execute become targets, the rest become
//!    "None".
//!
//! Samples without ground truth are skipped with a counter. A knowledge
//! graph that cannot be reached at all aborts the run: infrastructure
//! failures must never silently turn into "None" targets.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generation::{
    assemble_prompt, assemble_prompt_with_instruction, generate_answer,
};
use crate::ingest::{Dataset, TaskKind};
use crate::kg::{generate_call, parse_call, render_call, CallFailure, CallOutcome, ParsedCall};
use crate::llm::{AdapterId, LlmError};
use crate::pipeline::Pipeline;
use crate::prompts;
use crate::rankers::RankerKind;

/// Which training file an example belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingTask {
    ApiCall,
    Task1Qa,
    Task2Qa,
    Task3Qa,
}

impl TrainingTask {
    pub const ALL: [TrainingTask; 4] = [
        TrainingTask::ApiCall,
        TrainingTask::Task1Qa,
        TrainingTask::Task2Qa,
        TrainingTask::Task3Qa,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            TrainingTask::ApiCall => "api_call.jsonl",
            TrainingTask::Task1Qa => "task1_qa.jsonl",
            TrainingTask::Task2Qa => "task2_qa.jsonl",
            TrainingTask::Task3Qa => "task3_qa.jsonl",
        }
    }
}

impl From<TaskKind> for TrainingTask {
    fn from(task: TaskKind) -> Self {
        match task {
            TaskKind::Task1 => TrainingTask::Task1Qa,
            TaskKind::Task2 => TrainingTask::Task2Qa,
            TaskKind::Task3 => TrainingTask::Task3Qa,
        }
    }
}

/// How an example's target came to be.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Some always-answer attempt was judged correct (or the sample is a
    /// false-premise question): the ground-truth label is kept.
    OriginalLabel,
    /// No attempt was correct: the target is the canonical miss.
    RelabeledMiss,
    /// The generated (or corrected) call executed successfully.
    SuccessfulCall,
    /// Explicit "None" target: the model declined, or a correction failed.
    NoneTarget,
    /// Awaiting human correction; exported to the review file.
    NeedsReview,
}

/// One training row. `relabeled` is true exactly for relabeled misses, and
/// only those carry the canonical miss target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub sample_id: String,
    pub task: TrainingTask,
    pub prompt: String,
    pub target: String,
    pub relabeled: bool,
    pub provenance: Provenance,
}

impl TrainingExample {
    pub fn original_label(sample_id: &str, task: TrainingTask, prompt: String, target: &str) -> Self {
        TrainingExample {
            sample_id: sample_id.to_string(),
            task,
            prompt,
            target: target.to_string(),
            relabeled: false,
            provenance: Provenance::OriginalLabel,
        }
    }

    pub fn relabeled_miss(sample_id: &str, task: TrainingTask, prompt: String) -> Self {
        TrainingExample {
            sample_id: sample_id.to_string(),
            task,
            prompt,
            target: prompts::MISS_TARGET.to_string(),
            relabeled: true,
            provenance: Provenance::RelabeledMiss,
        }
    }

    pub fn successful_call(sample_id: &str, prompt: String, call: &str) -> Self {
        TrainingExample {
            sample_id: sample_id.to_string(),
            task: TrainingTask::ApiCall,
            prompt,
            target: call.to_string(),
            relabeled: false,
            provenance: Provenance::SuccessfulCall,
        }
    }

    pub fn none_target(sample_id: &str, prompt: String) -> Self {
        TrainingExample {
            sample_id: sample_id.to_string(),
            task: TrainingTask::ApiCall,
            prompt,
            target: "None".to_string(),
            relabeled: false,
            provenance: Provenance::NoneTarget,
        }
    }

    pub fn needs_review(sample_id: &str, prompt: String) -> Self {
        TrainingExample {
            sample_id: sample_id.to_string(),
            task: TrainingTask::ApiCall,
            prompt,
            target: String::new(),
            relabeled: false,
            provenance: Provenance::NeedsReview,
        }
    }

    /// Invariant check used by tests: the relabel flag, the miss target,
    /// and the provenance agree.
    pub fn invariants_hold(&self) -> bool {
        let miss = self.target == prompts::MISS_TARGET;
        self.relabeled == (self.provenance == Provenance::RelabeledMiss)
            && miss == (self.provenance == Provenance::RelabeledMiss)
    }
}

/// Review round-trip row: raw generation out, optional correction back in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewEntry {
    pub sample_id: String,
    pub raw_generation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrected_call: Option<String>,
}

#[derive(Debug, Default)]
pub struct CurationOutcome {
    pub examples: Vec<TrainingExample>,
    pub review: Vec<ReviewEntry>,
    pub skipped_no_truth: usize,
}

#[derive(Debug, Error)]
pub enum CurationError {
    #[error("knowledge graph endpoint unreachable; aborting so failures cannot become targets")]
    KgUnreachable,
    #[error("api-call curation requires a function registry")]
    MissingRegistry,
    #[error("judge call failed: {0}")]
    Judge(#[from] LlmError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// QA relabeling over a labeled dataset. The stored prompt is the task's
/// standard prompt under the configured ranker; the always-answer variant
/// is used only to probe what the base model can reach.
pub async fn relabel_qa_targets(
    pipeline: &Pipeline,
    dataset: &Dataset,
) -> Result<CurationOutcome, CurationError> {
    let mut outcome = CurationOutcome::default();
    let config = pipeline.config();

    for sample in &dataset.samples {
        let Some(truth) = sample.answer.as_deref().filter(|t| !t.is_empty()) else {
            outcome.skipped_no_truth += 1;
            continue;
        };
        let task = TrainingTask::from(sample.task);
        let (pool, _) = pipeline.gather_candidates(sample).await;

        let standard_prompt = {
            let selected = pipeline
                .rank_and_select(config.ranker, &sample.question, &pool)
                .await
                .unwrap_or_default();
            assemble_prompt(&selected, sample, &pipeline.gen_config).rendered
        };

        // Exception rule: false-premise questions always keep their label.
        if sample.false_premise() {
            outcome.examples.push(TrainingExample::original_label(
                &sample.id,
                task,
                standard_prompt,
                truth,
            ));
            continue;
        }

        let mut any_correct = false;
        for kind in RankerKind::ALL {
            let selected = pipeline
                .rank_and_select(kind, &sample.question, &pool)
                .await
                .unwrap_or_default();
            let bundle = assemble_prompt_with_instruction(
                &selected,
                sample,
                &pipeline.gen_config,
                prompts::ALWAYS_ANSWER_INSTRUCTION,
            );
            let answer = generate_answer(
                pipeline.llm(),
                &bundle,
                &sample.id,
                AdapterId::base(),
                &pipeline.gen_config,
            )
            .await;
            if pipeline
                .llm()
                .judge_correct(&sample.question, truth, &answer.raw_text)
                .await?
            {
                any_correct = true;
                break;
            }
        }

        outcome.examples.push(if any_correct {
            TrainingExample::original_label(&sample.id, task, standard_prompt, truth)
        } else {
            TrainingExample::relabeled_miss(&sample.id, task, standard_prompt)
        });
    }
    Ok(outcome)
}

/// API-call target curation over Task 2/3 samples. `corrections` is the
/// reviewer's round-trip file; entries without a correction stay under
/// review.
pub async fn curate_api_targets(
    pipeline: &Pipeline,
    dataset: &Dataset,
    corrections: &[ReviewEntry],
) -> Result<CurationOutcome, CurationError> {
    let registry = pipeline.registry().ok_or(CurationError::MissingRegistry)?;
    let corrections: BTreeMap<&str, &ReviewEntry> = corrections
        .iter()
        .map(|entry| (entry.sample_id.as_str(), entry))
        .collect();

    let mut outcome = CurationOutcome::default();
    for sample in dataset.samples.iter().filter(|s| s.task.uses_kg()) {
        let prompt = prompts::render_call_prompt(registry, &sample.question, &sample.query_time);
        let raw = generate_call(
            pipeline.llm(),
            &AdapterId::base(),
            &sample.question,
            &sample.query_time,
            registry,
        )
        .await?;

        let initial = match parse_call(&raw, registry) {
            Ok(ParsedCall::NoCall) => {
                outcome
                    .examples
                    .push(TrainingExample::none_target(&sample.id, prompt));
                continue;
            }
            Ok(ParsedCall::Call(call)) => Some(call),
            Err(_) => None,
        };

        let executed = match initial {
            Some(call) => match pipeline.kg.execute_call(&call).await {
                CallOutcome::Executed { .. } => {
                    outcome.examples.push(TrainingExample::successful_call(
                        &sample.id,
                        prompt,
                        &render_call(&call),
                    ));
                    continue;
                }
                CallOutcome::Failed(CallFailure::Unreachable) => {
                    return Err(CurationError::KgUnreachable);
                }
                CallOutcome::Failed(_) | CallOutcome::NoCall => false,
            },
            None => false,
        };
        debug_assert!(!executed);

        // Failed to parse or execute: apply a reviewer correction if one
        // exists, otherwise export for review.
        if let Some(entry) = corrections.get(sample.id.as_str()) {
            if let Some(corrected) = entry.corrected_call.as_deref() {
                match parse_call(corrected, registry) {
                    Ok(ParsedCall::Call(call)) => match pipeline.kg.execute_call(&call).await {
                        CallOutcome::Executed { .. } => {
                            outcome.examples.push(TrainingExample::successful_call(
                                &sample.id,
                                prompt,
                                &render_call(&call),
                            ));
                        }
                        CallOutcome::Failed(CallFailure::Unreachable) => {
                            return Err(CurationError::KgUnreachable);
                        }
                        _ => {
                            outcome
                                .examples
                                .push(TrainingExample::none_target(&sample.id, prompt));
                        }
                    },
                    // "None" or anything unparseable corrects to no call
                    _ => {
                        outcome
                            .examples
                            .push(TrainingExample::none_target(&sample.id, prompt));
                    }
                }
                continue;
            }
        }

        outcome
            .examples
            .push(TrainingExample::needs_review(&sample.id, prompt));
        outcome.review.push(ReviewEntry {
            sample_id: sample.id.clone(),
            raw_generation: raw,
            corrected_call: None,
        });
    }
    Ok(outcome)
}

/// Intended adapter-training hyperparameters, recorded as metadata next to
/// the emitted files.
pub const TRAINING_META: (&str, u32, &str, f64) = ("lora_rank", 256, "weight_decay", 1.0);

/// Writes one file per training task (always all four, even when empty),
/// rows ordered by sample id, plus a `training_meta.json` sidecar recording
/// the intended adapter-training hyperparameters.
pub fn emit_training_files(
    examples: &[TrainingExample],
    out_dir: &Path,
) -> Result<Vec<PathBuf>, CurationError> {
    std::fs::create_dir_all(out_dir)?;
    let mut paths = Vec::new();
    for task in TrainingTask::ALL {
        let mut rows: Vec<&TrainingExample> =
            examples.iter().filter(|e| e.task == task).collect();
        rows.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
        let path = out_dir.join(task.file_name());
        let mut file = std::fs::File::create(&path)?;
        for row in rows {
            writeln!(
                file,
                "{}",
                serde_json::to_string(row).map_err(std::io::Error::other)?
            )?;
        }
        paths.push(path);
    }

    let sidecar = out_dir.join("training_meta.json");
    let meta = serde_json::json!({
        TRAINING_META.0: TRAINING_META.1,
        TRAINING_META.2: TRAINING_META.3,
    });
    std::fs::write(&sidecar, serde_json::to_string_pretty(&meta).map_err(std::io::Error::other)?)?;
    paths.push(sidecar);
    Ok(paths)
}

/// Writes the review export, ordered by sample id.
pub fn write_review_file(review: &[ReviewEntry], path: &Path) -> Result<(), CurationError> {
    let mut rows = review.to_vec();
    rows.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    let mut file = std::fs::File::create(path)?;
    for row in rows {
        writeln!(
            file,
            "{}",
            serde_json::to_string(&row).map_err(std::io::Error::other)?
        )?;
    }
    Ok(())
}

/// Loads a reviewer corrections file (same shape as the review export).
pub fn load_corrections(path: &Path) -> Result<Vec<ReviewEntry>, CurationError> {
    let data = std::fs::read_to_string(path)?;
    let mut entries = Vec::new();
    for line in data.lines().filter(|l| !l.trim().is_empty()) {
        entries.push(serde_json::from_str(line).map_err(std::io::Error::other)?);
    }
    Ok(entries)
}
