//! End-to-end orchestration.
//!
//! Per sample: segment every document (concurrently), add snippet segments,
//! for Tasks 2-3 generate and execute one knowledge-graph call and merge
//! its response segments into the pool, rank, select top-k, assemble the
//! prompt, generate, classify. Each sample runs under a wall-clock deadline
//! (30 s by default); exceeding it yields a missing answer rather than a
//! late or invented one. Task 1 performs no knowledge-graph work at all.
//!
//! Outputs are keyed and ordered by sample id, never by completion order,
//! so identical inputs produce byte-identical files at any parallelism.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use futures::stream::{self, StreamExt};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::evaluation::{
    classify_answer, crag_score, full_report, render_retrieval_table, render_table, EvalError,
    EvalRecord, Facets, FacetedReport, JudgeMode, MetricsReport,
};
use crate::generation::{
    assemble_prompt, generate_answer, select_adapter, AnswerRecord, GenerationConfig,
};
use crate::ingest::{Dataset, IngestError, Sample};
use crate::kg::{
    format_response, generate_call, parse_call, ApiRegistry, CallFailure, CallOutcome, KgClient,
    ParsedCall, RegistryError,
};
use crate::llm::{AdapterId, LlmClient, LlmConfig};
use crate::rankers::{
    rank_candidates, select_top_k, CrossClient, EmbedClient, RankError, RankerKind,
    RankingClients, ScoredCandidate,
};
use crate::segmenter::{segment_document, snippet_segment, Segment};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Invalid(String),
}

/// Wired-up pipeline: configuration plus the service clients.
pub struct Pipeline {
    pub(crate) config: RunConfig,
    pub(crate) llm: LlmClient,
    pub(crate) clients: RankingClients,
    pub(crate) kg: KgClient,
    pub(crate) registry: Option<ApiRegistry>,
    pub(crate) gen_config: GenerationConfig,
}

/// Everything recorded about one processed sample.
#[derive(Debug, Clone)]
pub struct SampleRun {
    pub answer: AnswerRecord,
    pub eval: Option<EvalRecord>,
    pub unevaluable: bool,
    pub deadline_hit: bool,
    pub kg_outcome: Option<String>,
    pub pool_size: usize,
    pub context_blocks: usize,
    pub total_ms: u64,
}

/// Result of a full `run`: output paths plus headline counters.
#[derive(Debug)]
pub struct RunSummary {
    pub n_samples: usize,
    pub evaluated: usize,
    pub unevaluable: usize,
    pub deadline_exceeded: usize,
    pub report: Option<FacetedReport>,
    pub answers_path: PathBuf,
    pub eval_path: PathBuf,
    pub metrics_json_path: Option<PathBuf>,
    pub metrics_table_path: Option<PathBuf>,
    pub log_path: PathBuf,
}

impl Pipeline {
    pub fn new(config: RunConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let registry = match &config.registry_path {
            Some(path) => Some(ApiRegistry::from_json_file(path)?),
            None => None,
        };
        let llm = LlmClient::new(LlmConfig {
            base_url: config.endpoints.llm.clone(),
            model_map: BTreeMap::new(),
            timeout_ms: config.llm_timeout_ms,
            max_attempts: config.llm_max_attempts,
            initial_backoff_ms: config.llm_backoff_ms,
            max_inflight: config.llm_max_inflight,
        });
        let clients = RankingClients {
            embed: EmbedClient::new(&config.endpoints.embed, config.scorer_timeout_ms)
                .with_batch_size(config.scorer_batch_size),
            cross: CrossClient::new(&config.endpoints.cross, config.scorer_timeout_ms)
                .with_batch_size(config.scorer_batch_size),
        };
        let kg = KgClient::new(&config.endpoints.kg, config.kg_timeout_ms);
        let gen_config = GenerationConfig {
            prompt_char_cap: config.prompt_char_cap,
            miss_phrases: config.miss_phrases.clone(),
            max_tokens: config.max_tokens,
            use_base_adapter: config.use_base_adapter,
        };
        Ok(Pipeline {
            config,
            llm,
            clients,
            kg,
            registry,
            gen_config,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn llm(&self) -> &LlmClient {
        &self.llm
    }

    pub fn registry(&self) -> Option<&ApiRegistry> {
        self.registry.as_ref()
    }

    /// Candidate pool for one sample: web segments per document (documents
    /// segmented concurrently, merged in document order), then snippet
    /// segments, then knowledge-graph response segments for Tasks 2-3.
    /// Returns the pool and the call outcome class for the run log.
    pub async fn gather_candidates(&self, sample: &Sample) -> (Vec<Segment>, Option<String>) {
        let max_chars = self.config.max_segment_chars;

        let doc_tasks: Vec<_> = sample
            .search_results
            .iter()
            .enumerate()
            .map(|(doc_index, result)| {
                let html = result.page_html.clone().into_bytes();
                tokio::task::spawn_blocking(move || segment_document(&html, max_chars, doc_index))
            })
            .collect();
        let mut pool = Vec::new();
        for task in doc_tasks {
            pool.extend(task.await.expect("segmentation never panics"));
        }
        for (doc_index, result) in sample.search_results.iter().enumerate() {
            if let Some(segment) = snippet_segment(result, doc_index, max_chars) {
                pool.push(segment);
            }
        }

        let mut kg_outcome = None;
        if sample.task.uses_kg() {
            if let Some(registry) = &self.registry {
                let (segments, outcome_class) = self
                    .kg_segments(registry, sample, sample.search_results.len())
                    .await;
                pool.extend(segments);
                kg_outcome = Some(outcome_class);
            }
        }
        (pool, kg_outcome)
    }

    /// One knowledge-graph interaction: generate a call with the api-call
    /// adapter, parse, execute, format. Failures degrade to zero segments.
    async fn kg_segments(
        &self,
        registry: &ApiRegistry,
        sample: &Sample,
        doc_index: usize,
    ) -> (Vec<Segment>, String) {
        let raw = match generate_call(
            &self.llm,
            &AdapterId::api_call(),
            &sample.question,
            &sample.query_time,
            registry,
        )
        .await
        {
            Ok(raw) => raw,
            Err(e) => return (Vec::new(), format!("generation-failed:{}", e.class())),
        };
        let call = match parse_call(&raw, registry) {
            Ok(ParsedCall::NoCall) => return (Vec::new(), "no-call".to_string()),
            Ok(ParsedCall::Call(call)) => call,
            Err(e) => return (Vec::new(), format!("parse-failed:{:?}", CallFailure::from(&e))),
        };
        match self.kg.execute_call(&call).await {
            CallOutcome::Executed { body, .. } => {
                match format_response(&body, &call.function.formatter, self.config.max_segment_chars, doc_index)
                {
                    Ok(segments) => (segments, "executed".to_string()),
                    Err(failure) => (Vec::new(), format!("format-failed:{failure:?}")),
                }
            }
            CallOutcome::Failed(failure) => (Vec::new(), format!("execute-failed:{failure:?}")),
            CallOutcome::NoCall => (Vec::new(), "no-call".to_string()),
        }
    }

    /// Ranks a pool and keeps the configured top-k under the char budget.
    pub async fn rank_and_select(
        &self,
        kind: RankerKind,
        question: &str,
        pool: &[Segment],
    ) -> Result<Vec<ScoredCandidate>, RankError> {
        let candidates = rank_candidates(kind, question, pool, &self.clients).await?;
        Ok(select_top_k(
            &candidates,
            self.config.top_k,
            self.config.char_budget,
        ))
    }

    /// The per-sample deadline-bounded path: candidates, ranking, prompt,
    /// generation. Infrastructure failures fail closed to a miss record.
    async fn answer_sample(
        &self,
        sample: &Sample,
        ranker: RankerKind,
        use_base_adapter: bool,
    ) -> (AnswerRecord, Option<String>, usize, usize) {
        let (pool, kg_outcome) = self.gather_candidates(sample).await;
        let selected = match self.rank_and_select(ranker, &sample.question, &pool).await {
            Ok(selected) => selected,
            Err(e) => {
                return (
                    AnswerRecord::from_error(&sample.id, e.class()),
                    kg_outcome,
                    pool.len(),
                    0,
                );
            }
        };
        let mut gen_config = self.gen_config.clone();
        gen_config.use_base_adapter = use_base_adapter;
        let bundle = assemble_prompt(&selected, sample, &gen_config);
        let adapter = select_adapter(sample.task, use_base_adapter);
        let answer =
            generate_answer(&self.llm, &bundle, &sample.id, adapter, &gen_config).await;
        (answer, kg_outcome, pool.len(), bundle.context_blocks.len())
    }

    /// Processes one sample end to end, including classification (which
    /// runs outside the deadline: the deadline bounds answer production).
    pub async fn process_sample(
        &self,
        sample: &Sample,
        ranker: RankerKind,
        use_base_adapter: bool,
    ) -> SampleRun {
        let started = Instant::now();
        let deadline = Duration::from_millis(self.config.per_sample_deadline_ms);
        let (answer, kg_outcome, pool_size, context_blocks, deadline_hit) =
            match tokio::time::timeout(
                deadline,
                self.answer_sample(sample, ranker, use_base_adapter),
            )
            .await
            {
                Ok((answer, kg_outcome, pool_size, blocks)) => {
                    (answer, kg_outcome, pool_size, blocks, false)
                }
                Err(_) => (
                    AnswerRecord::from_error(&sample.id, "DeadlineExceeded"),
                    None,
                    0,
                    0,
                    true,
                ),
            };

        let mut eval = None;
        let mut unevaluable = false;
        if let Some(truth) = sample.answer.as_deref().filter(|t| !t.is_empty()) {
            let judge = match self.config.judge_mode {
                JudgeMode::LlmJudge => Some(&self.llm),
                JudgeMode::ExactMatch => None,
            };
            match classify_answer(&answer, &sample.question, truth, self.config.judge_mode, judge)
                .await
            {
                Ok(verdict) => {
                    eval = Some(EvalRecord {
                        sample_id: sample.id.clone(),
                        verdict,
                        judge_mode: self.config.judge_mode,
                        facets: Facets::from_sample(sample),
                    });
                }
                Err(EvalError::Unevaluable { .. }) => unevaluable = true,
                Err(EvalError::EmptyRecords) => unreachable!("classification never aggregates"),
            }
        }

        SampleRun {
            answer,
            eval,
            unevaluable,
            deadline_hit,
            kg_outcome,
            pool_size,
            context_blocks,
            total_ms: started.elapsed().as_millis() as u64,
        }
    }

    /// Runs every sample with bounded concurrency; results come back sorted
    /// by sample id regardless of completion order.
    pub async fn run_over(
        &self,
        samples: &[Sample],
        ranker: RankerKind,
        use_base_adapter: bool,
    ) -> Vec<SampleRun> {
        let mut runs: Vec<SampleRun> = stream::iter(samples)
            .map(|sample| self.process_sample(sample, ranker, use_base_adapter))
            .buffer_unordered(self.config.parallelism.max(1))
            .collect()
            .await;
        runs.sort_by(|a, b| a.answer.sample_id.cmp(&b.answer.sample_id));
        runs
    }

    /// Full pipeline run: processes the dataset and writes the answers,
    /// eval records, metrics report (JSON + aligned table), and run log
    /// into the output directory.
    pub async fn run(&self, dataset: &Dataset) -> Result<RunSummary, PipelineError> {
        std::fs::create_dir_all(&self.config.output_dir)?;
        let runs = self
            .run_over(&dataset.samples, self.config.ranker, self.config.use_base_adapter)
            .await;

        let answers_path = self.config.output_dir.join("answers.jsonl");
        let eval_path = self.config.output_dir.join("eval.jsonl");
        let log_path = self.config.output_dir.join("run.log");

        let mut answers_file = std::fs::File::create(&answers_path)?;
        for run in &runs {
            writeln!(
                answers_file,
                "{}",
                serde_json::to_string(&run.answer).map_err(std::io::Error::other)?
            )?;
        }

        let eval_records: Vec<EvalRecord> =
            runs.iter().filter_map(|run| run.eval.clone()).collect();
        let mut eval_file = std::fs::File::create(&eval_path)?;
        for record in &eval_records {
            writeln!(
                eval_file,
                "{}",
                serde_json::to_string(record).map_err(std::io::Error::other)?
            )?;
        }

        let mut report = None;
        let mut metrics_json_path = None;
        let mut metrics_table_path = None;
        if !eval_records.is_empty() {
            let faceted = full_report(&eval_records, self.config.judge_mode)
                .expect("non-empty records aggregate");
            let json_path = self.config.output_dir.join("metrics.json");
            std::fs::write(&json_path, serde_json::to_string_pretty(&faceted)?)?;
            let label = self.run_label();
            let table_path = self.config.output_dir.join("metrics.txt");
            std::fs::write(&table_path, render_table(&[(label, faceted.overall)]))?;
            metrics_json_path = Some(json_path);
            metrics_table_path = Some(table_path);
            report = Some(faceted);
        }

        let mut log = std::fs::File::create(&log_path)?;
        for run in &runs {
            writeln!(
                log,
                "sample={} total_ms={} pool={} blocks={} kg={} deadline_hit={} miss={}",
                run.answer.sample_id,
                run.total_ms,
                run.pool_size,
                run.context_blocks,
                run.kg_outcome.as_deref().unwrap_or("-"),
                run.deadline_hit,
                run.answer.is_miss,
            )?;
        }
        let deadline_exceeded = runs.iter().filter(|r| r.deadline_hit).count();
        let unevaluable = runs.iter().filter(|r| r.unevaluable).count();
        writeln!(
            log,
            "summary samples={} evaluated={} unevaluable={} deadline_exceeded={}",
            runs.len(),
            eval_records.len(),
            unevaluable,
            deadline_exceeded,
        )?;

        Ok(RunSummary {
            n_samples: runs.len(),
            evaluated: eval_records.len(),
            unevaluable,
            deadline_exceeded,
            report,
            answers_path,
            eval_path,
            metrics_json_path,
            metrics_table_path,
            log_path,
        })
    }

    fn run_label(&self) -> String {
        let adapters = if self.config.use_base_adapter {
            "base"
        } else {
            "task-adapters"
        };
        format!("{} / {}", adapters, self.config.ranker.label())
    }

    /// Runs the same deterministic sample subset once per ranking strategy
    /// with the base adapter fixed, and writes a comparison table
    /// (Retrieval Model, Accuracy, CRAG). The subset is a seeded shuffle
    /// truncated to `sample_budget`.
    pub async fn compare_retrievers(
        &self,
        dataset: &Dataset,
        sample_budget: usize,
    ) -> Result<Vec<(String, MetricsReport)>, PipelineError> {
        if !dataset.samples.iter().any(|s| s.answer.is_some()) {
            return Err(PipelineError::Invalid(
                "retrieval comparison needs ground-truth answers".to_string(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let mut indices: Vec<usize> = (0..dataset.samples.len()).collect();
        indices.shuffle(&mut rng);
        indices.truncate(sample_budget);
        indices.sort_unstable();
        let subset: Vec<Sample> = indices.iter().map(|&i| dataset.samples[i].clone()).collect();

        let mut rows = Vec::new();
        for kind in RankerKind::ALL {
            let runs = self.run_over(&subset, kind, true).await;
            let eval_records: Vec<EvalRecord> =
                runs.iter().filter_map(|run| run.eval.clone()).collect();
            let report = crag_score(&eval_records).map_err(|_| {
                PipelineError::Invalid("no evaluable samples in comparison subset".to_string())
            })?;
            rows.push((kind.label().to_string(), report));
        }

        std::fs::create_dir_all(&self.config.output_dir)?;
        let table = render_retrieval_table(&rows);
        std::fs::write(self.config.output_dir.join("comparison.txt"), &table)?;
        let json: Vec<serde_json::Value> = rows
            .iter()
            .map(|(label, report)| {
                serde_json::json!({"retrieval_model": label, "metrics": report})
            })
            .collect();
        std::fs::write(
            self.config.output_dir.join("comparison.json"),
            serde_json::to_string_pretty(&json)?,
        )?;
        Ok(rows)
    }
}

impl From<serde_json::Error> for PipelineError {
    fn from(e: serde_json::Error) -> Self {
        PipelineError::Io(std::io::Error::other(e))
    }
}
