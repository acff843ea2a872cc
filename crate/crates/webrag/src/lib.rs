//! Batch retrieval-augmented question answering over web search results.
//!
//! The pipeline turns a line-delimited file of question samples into scored
//! answers: each sample's HTML documents are segmented into bounded chunks,
//! the chunks are ranked against the question by one of four strategies,
//! the top chunks (plus optional knowledge-graph API responses) are packed
//! into a context-before-question prompt, an adapter-routed model generates
//! the answer, and the answer is classified as correct, missing, or
//! hallucinated. Scoring rewards "i don't know" over a confident wrong
//! answer: +1 correct, 0 missing, -1 hallucinated.
//!
//! Modules map onto the pipeline stages:
//!
//! - [`ingest`] — dataset file format, loading, validation
//! - [`segmenter`] — HTML to bounded text segments (breadth-first, threshold 2000 chars)
//! - [`rankers`] — TF-IDF, biencoder, cross-encoder, and mean-rank ensemble scoring
//! - [`llm`] — adapter-routed chat client with retries, plus the yes/no judge
//! - [`kg`] — knowledge-graph function registry, call parsing, execution, formatting
//! - [`generation`] — prompt assembly and answer normalization
//! - [`curation`] — training-data relabeling and API-call target curation
//! - [`evaluation`] — verdicts, aggregate metrics, facet breakdowns
//! - [`pipeline`] — end-to-end orchestration under a per-sample deadline
//! - [`config`] — run configuration, TOML file + environment overrides
//!
//! Everything network-facing speaks plain HTTP contracts so the whole
//! pipeline can run hermetically against the deterministic stub servers in
//! the companion `webrag-testkit` crate.

pub mod config;
pub mod curation;
pub mod evaluation;
pub mod generation;
pub mod ingest;
pub mod kg;
pub mod llm;
pub mod pipeline;
pub mod prompts;
pub mod rankers;
pub mod segmenter;

#[cfg(doctest)]
mod booktests;

pub use config::{Endpoints, RunConfig};
pub use evaluation::{JudgeMode, MetricsReport, Verdict};
pub use ingest::{Dataset, Sample, SearchResult, TaskKind};
pub use rankers::RankerKind;
pub use segmenter::{Segment, SegmentOrigin};
