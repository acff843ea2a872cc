//! Command-line runner for the webrag pipeline.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use webrag::curation::{
    curate_api_targets, emit_training_files, load_corrections, relabel_qa_targets,
    write_review_file, CurationOutcome,
};
use webrag::evaluation::render_retrieval_table;
use webrag::ingest::{load_dataset, TaskKind};
use webrag::pipeline::Pipeline;
use webrag::segmenter::{parse_html, segment_tree, DEFAULT_MAX_SEGMENT_CHARS};
use webrag::{RankerKind, RunConfig};
use webrag_testkit::{CrossMode, StubCross, StubEmbed, StubKg, StubLlm};

#[derive(Parser)]
#[command(name = "webrag", version, about = "Batch web question answering pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline over a dataset file.
    Run(RunArgs),
    /// Run the same sample subset once per ranking strategy and emit a
    /// comparison table.
    CompareRetrievers(CompareArgs),
    /// Produce adapter-training files (QA relabeling + API-call targets).
    Curate(CurateArgs),
    /// Dump the segments of an HTML document or dataset sample.
    Segment(SegmentArgs),
    /// Serve the deterministic stub servers (LLM, embed, cross, KG).
    ServeStubs(ServeStubsArgs),
}

/// Flags shared by every pipeline-driving subcommand. Precedence:
/// defaults < config file < WEBRAG_*_URL environment < flags.
#[derive(Args)]
struct PipelineArgs {
    /// Dataset file (one JSON sample per line).
    #[arg(long)]
    input: PathBuf,
    /// Task mode: task1 | task2 | task3.
    #[arg(long)]
    task: TaskKind,
    /// Output directory.
    #[arg(long, default_value = "out")]
    output_dir: PathBuf,
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Ranking strategy: tfidf | biencoder | cross-encoder | ensemble-mean-rank.
    #[arg(long)]
    ranker: Option<RankerKind>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    char_budget: Option<usize>,
    #[arg(long)]
    max_segment_chars: Option<usize>,
    /// Concurrent samples.
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    deadline_ms: Option<u64>,
    /// Judge mode: exact | llm.
    #[arg(long)]
    judge: Option<webrag::JudgeMode>,
    /// Ablation: answer with the base adapter for every task.
    #[arg(long)]
    base_adapter: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Knowledge-graph function registry (JSON); required for tasks 2-3.
    #[arg(long)]
    registry: Option<PathBuf>,
    #[arg(long)]
    llm_url: Option<String>,
    #[arg(long)]
    embed_url: Option<String>,
    #[arg(long)]
    cross_url: Option<String>,
    #[arg(long)]
    kg_url: Option<String>,
}

impl PipelineArgs {
    fn build_config(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::from_toml_file(path)?,
            None => RunConfig::default(),
        };
        config.task = self.task;
        config.input = self.input.clone();
        config.output_dir = self.output_dir.clone();
        config.apply_env();
        if let Some(ranker) = self.ranker {
            config.ranker = ranker;
        }
        if let Some(top_k) = self.top_k {
            config.top_k = top_k;
        }
        if let Some(char_budget) = self.char_budget {
            config.char_budget = char_budget;
        }
        if let Some(max_segment_chars) = self.max_segment_chars {
            config.max_segment_chars = max_segment_chars;
        }
        if let Some(parallelism) = self.parallelism {
            config.parallelism = parallelism;
        }
        if let Some(deadline) = self.deadline_ms {
            config.per_sample_deadline_ms = deadline;
        }
        if let Some(judge) = self.judge {
            config.judge_mode = judge;
        }
        if self.base_adapter {
            config.use_base_adapter = true;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(registry) = &self.registry {
            config.registry_path = Some(registry.clone());
        }
        if let Some(url) = &self.llm_url {
            config.endpoints.llm = url.clone();
        }
        if let Some(url) = &self.embed_url {
            config.endpoints.embed = url.clone();
        }
        if let Some(url) = &self.cross_url {
            config.endpoints.cross = url.clone();
        }
        if let Some(url) = &self.kg_url {
            config.endpoints.kg = url.clone();
        }
        Ok(config)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Number of samples in the deterministic comparison subset.
    #[arg(long, default_value_t = 500)]
    sample_budget: usize,
}

#[derive(Args)]
struct CurateArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Reviewer corrections file (review export with corrected_call filled).
    #[arg(long)]
    corrections: Option<PathBuf>,
}

#[derive(Args)]
struct SegmentArgs {
    /// HTML file to segment.
    #[arg(long, conflicts_with_all = ["input", "sample_id"])]
    html: Option<PathBuf>,
    /// Dataset file to pull documents from.
    #[arg(long, requires = "task")]
    input: Option<PathBuf>,
    #[arg(long)]
    task: Option<TaskKind>,
    /// Restrict to one sample id (default: all samples).
    #[arg(long)]
    sample_id: Option<String>,
    #[arg(long, default_value_t = DEFAULT_MAX_SEGMENT_CHARS)]
    max_chars: usize,
}

#[derive(Args)]
struct ServeStubsArgs {
    #[arg(long, default_value_t = 8240)]
    llm_port: u16,
    #[arg(long, default_value_t = 8241)]
    embed_port: u16,
    #[arg(long, default_value_t = 8242)]
    cross_port: u16,
    #[arg(long, default_value_t = 8243)]
    kg_port: u16,
    /// JSON array of {pattern, response, delay_ms} rules for the LLM stub.
    #[arg(long)]
    llm_rules: Option<PathBuf>,
    /// JSON array of {path, args, body, delay_ms} fixtures for the KG stub.
    #[arg(long)]
    kg_fixtures: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    embed_dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// token-overlap | canned (canned reuses --llm-rules patterns).
    #[arg(long, default_value = "token-overlap")]
    cross_mode: String,
    /// Answer judge prompts by reference/candidate equality.
    #[arg(long)]
    judge_equality: bool,
}

#[tokio::main]
async fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => run(args).await,
        Command::CompareRetrievers(args) => compare(args).await,
        Command::Curate(args) => curate(args).await,
        Command::Segment(args) => segment(args),
        Command::ServeStubs(args) => serve_stubs(args).await,
    }
}

async fn run(args: RunArgs) -> Result<()> {
    let config = args.pipeline.build_config()?;
    let dataset = load_dataset(&config.input, config.task)?;
    eprintln!(
        "loaded {} samples ({} skipped) from {}",
        dataset.len(),
        dataset.stats.skipped(),
        dataset.source_path
    );
    let pipeline = Pipeline::new(config)?;
    let summary = pipeline.run(&dataset).await?;
    eprintln!(
        "processed {} samples: evaluated={} unevaluable={} deadline_exceeded={}",
        summary.n_samples, summary.evaluated, summary.unevaluable, summary.deadline_exceeded
    );
    if let Some(report) = &summary.report {
        println!(
            "accuracy={:.4} missing={:.4} hallucination={:.4} crag={:.4} (judge: {:?})",
            report.overall.accuracy,
            report.overall.missing_rate,
            report.overall.hallucination_rate,
            report.overall.crag,
            report.judge_mode,
        );
    }
    println!("answers: {}", summary.answers_path.display());
    Ok(())
}

async fn compare(args: CompareArgs) -> Result<()> {
    let config = args.pipeline.build_config()?;
    let dataset = load_dataset(&config.input, config.task)?;
    let pipeline = Pipeline::new(config)?;
    let rows = pipeline.compare_retrievers(&dataset, args.sample_budget).await?;
    print!("{}", render_retrieval_table(&rows));
    Ok(())
}

async fn curate(args: CurateArgs) -> Result<()> {
    let config = args.pipeline.build_config()?;
    let dataset = load_dataset(&config.input, config.task)?;
    let pipeline = Pipeline::new(config)?;

    let qa = relabel_qa_targets(&pipeline, &dataset).await?;
    let api = if pipeline.config().task.uses_kg() {
        let corrections = match &args.corrections {
            Some(path) => load_corrections(path)?,
            None => Vec::new(),
        };
        curate_api_targets(&pipeline, &dataset, &corrections).await?
    } else {
        CurationOutcome::default()
    };

    let mut examples = qa.examples;
    examples.extend(api.examples.iter().cloned());
    let out_dir = pipeline.config().output_dir.join("training");
    let paths = emit_training_files(&examples, &out_dir)?;
    if !api.review.is_empty() {
        let review_path = out_dir.join("api_review.jsonl");
        write_review_file(&api.review, &review_path)?;
        eprintln!(
            "{} call(s) need review: {}",
            api.review.len(),
            review_path.display()
        );
    }

    let relabeled = examples.iter().filter(|e| e.relabeled).count();
    eprintln!(
        "curated {} examples ({} relabeled to miss, {} skipped without ground truth)",
        examples.len(),
        relabeled,
        qa.skipped_no_truth + api.skipped_no_truth
    );
    for path in paths {
        println!("{}", path.display());
    }
    Ok(())
}

fn segment(args: SegmentArgs) -> Result<()> {
    let dump = |doc_index: usize, html: &[u8]| -> Result<()> {
        let root = parse_html(html);
        for seg in segment_tree(&root, args.max_chars, doc_index) {
            println!(
                "{}",
                serde_json::json!({
                    "doc_index": seg.doc_index,
                    "node_path": seg.node_path,
                    "char_len": seg.char_len,
                    "text": seg.text,
                })
            );
        }
        Ok(())
    };

    if let Some(path) = &args.html {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        return dump(0, &bytes);
    }
    let (Some(input), Some(task)) = (&args.input, args.task) else {
        bail!("pass either --html FILE or --input DATASET --task TASK");
    };
    let dataset = load_dataset(input, task)?;
    for sample in &dataset.samples {
        if let Some(wanted) = &args.sample_id {
            if &sample.id != wanted {
                continue;
            }
        }
        for (doc_index, result) in sample.search_results.iter().enumerate() {
            dump(doc_index, result.page_html.as_bytes())?;
        }
    }
    Ok(())
}

async fn serve_stubs(args: ServeStubsArgs) -> Result<()> {
    let rules = match &args.llm_rules {
        Some(path) => webrag_testkit::load_rules(path)?,
        None => Vec::new(),
    };
    let mut llm = StubLlm::new(args.seed).with_rules(rules.clone());
    if args.judge_equality {
        llm = llm.judge_equality();
    }
    let llm = llm.serve(args.llm_port).await.map_err(|e| anyhow::anyhow!("{e}"))?;
    let embed = StubEmbed::new(args.embed_dim, args.seed)
        .serve(args.embed_port)
        .await
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let cross_mode = match args.cross_mode.as_str() {
        "token-overlap" => CrossMode::TokenOverlap,
        "canned" => CrossMode::Canned(rules),
        other => bail!("unknown cross mode {other:?}"),
    };
    let cross = StubCross::new(cross_mode)
        .serve(args.cross_port)
        .await
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let fixtures = match &args.kg_fixtures {
        Some(path) => webrag_testkit::load_kg_fixtures(path)?,
        None => Vec::new(),
    };
    let kg = StubKg::new(fixtures)
        .serve(args.kg_port)
        .await
        .map_err(|e| anyhow::anyhow!("{e}"))?;

    println!("llm:   {}", llm.url());
    println!("embed: {}", embed.url());
    println!("cross: {}", cross.url());
    println!("kg:    {}", kg.url());
    println!("press ctrl-c to stop");
    tokio::signal::ctrl_c().await?;
    Ok(())
}
