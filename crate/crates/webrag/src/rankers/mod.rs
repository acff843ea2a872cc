//! Candidate ranking: four interchangeable strategies over the same segment
//! pool — lexical TF-IDF, a biencoder embedding service, a cross-encoder
//! scoring service, and a mean-rank ensemble of the three. The cross-encoder
//! is the shipped default.

mod fusion;
mod remote;
mod tfidf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::segmenter::Segment;

pub use fusion::{fuse_mean_rank, order_by_mean_rank, ranks_from_scores};
pub use remote::{CrossClient, EmbedClient, score_cross, score_dense};
pub use tfidf::{build_tfidf_index, score_tfidf, tokenize, TfidfIndex};

/// Ranking strategy selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankerKind {
    Tfidf,
    Biencoder,
    CrossEncoder,
    EnsembleMeanRank,
}

impl RankerKind {
    pub const ALL: [RankerKind; 4] = [
        RankerKind::Tfidf,
        RankerKind::Biencoder,
        RankerKind::CrossEncoder,
        RankerKind::EnsembleMeanRank,
    ];

    pub fn label(self) -> &'static str {
        match self {
            RankerKind::Tfidf => "tfidf",
            RankerKind::Biencoder => "biencoder",
            RankerKind::CrossEncoder => "cross-encoder",
            RankerKind::EnsembleMeanRank => "ensemble-mean-rank",
        }
    }
}

impl std::fmt::Display for RankerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for RankerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tfidf" | "tf-idf" => Ok(RankerKind::Tfidf),
            "biencoder" => Ok(RankerKind::Biencoder),
            "cross-encoder" | "cross" => Ok(RankerKind::CrossEncoder),
            "ensemble-mean-rank" | "ensemble" => Ok(RankerKind::EnsembleMeanRank),
            other => Err(format!("unknown ranker {other:?}")),
        }
    }
}

/// One ranked candidate. Within a ranking the `rank` fields are a
/// permutation of `1..=n`, consistent with descending score; score ties
/// break by ascending candidate index.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    pub segment: Segment,
    pub score: f64,
    pub rank: usize,
}

/// Remote scoring endpoints used by the biencoder and cross-encoder
/// strategies (and therefore by the ensemble).
#[derive(Debug, Clone)]
pub struct RankingClients {
    pub embed: EmbedClient,
    pub cross: CrossClient,
}

#[derive(Debug, Error)]
pub enum RankError {
    #[error("cannot build an index over an empty corpus")]
    EmptyCorpus,
    #[error("scoring service unavailable at {url}: {detail}")]
    ServiceUnavailable { url: String, detail: String },
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("scoring service returned {got} scores for {expected} passages")]
    LengthMismatch { expected: usize, got: usize },
    #[error("rankings must all cover the same candidates: {detail}")]
    RaggedInput { detail: String },
}

impl RankError {
    /// Short class name, used when recording fail-closed answers.
    pub fn class(&self) -> &'static str {
        match self {
            RankError::EmptyCorpus => "EmptyCorpus",
            RankError::ServiceUnavailable { .. } => "ServiceUnavailable",
            RankError::DimensionMismatch { .. } => "DimensionMismatch",
            RankError::LengthMismatch { .. } => "LengthMismatch",
            RankError::RaggedInput { .. } => "RaggedInput",
        }
    }
}

/// Scores and ranks `segments` against `question` with the chosen strategy.
/// The ensemble computes the TF-IDF, biencoder, and cross-encoder rankings
/// (remote calls concurrently) and fuses them by mean rank; its reported
/// score is the negated mean rank so that descending score still means
/// best-first. Result is sorted best-first with ranks assigned.
pub async fn rank_candidates(
    kind: RankerKind,
    question: &str,
    segments: &[Segment],
    clients: &RankingClients,
) -> Result<Vec<ScoredCandidate>, RankError> {
    if segments.is_empty() {
        return Ok(Vec::new());
    }
    let scores = match kind {
        RankerKind::Tfidf => {
            let index = build_tfidf_index(segments)?;
            score_tfidf(&index, question)
        }
        RankerKind::Biencoder => score_dense(&clients.embed, question, segments).await?,
        RankerKind::CrossEncoder => score_cross(&clients.cross, question, segments).await?,
        RankerKind::EnsembleMeanRank => {
            let index = build_tfidf_index(segments)?;
            let lexical = score_tfidf(&index, question);
            let (dense, cross) = tokio::try_join!(
                score_dense(&clients.embed, question, segments),
                score_cross(&clients.cross, question, segments),
            )?;
            let rankings = vec![
                ranks_from_scores(&lexical),
                ranks_from_scores(&dense),
                ranks_from_scores(&cross),
            ];
            let means = fuse_mean_rank(&rankings)?;
            means.iter().map(|m| -m).collect()
        }
    };
    Ok(candidates_from_scores(segments, &scores))
}

/// Turns a score list into best-first candidates with ranks `1..=n`.
pub fn candidates_from_scores(segments: &[Segment], scores: &[f64]) -> Vec<ScoredCandidate> {
    debug_assert_eq!(segments.len(), scores.len());
    let ranks = ranks_from_scores(scores);
    let mut order: Vec<usize> = (0..segments.len()).collect();
    order.sort_by_key(|&i| ranks[i]);
    order
        .into_iter()
        .map(|i| ScoredCandidate {
            segment: segments[i].clone(),
            score: scores[i],
            rank: ranks[i],
        })
        .collect()
}

/// Takes candidates best-first until `k` segments are kept or adding the
/// next one would push the cumulative character count past `char_budget`.
pub fn select_top_k(
    candidates: &[ScoredCandidate],
    k: usize,
    char_budget: usize,
) -> Vec<ScoredCandidate> {
    let mut kept = Vec::new();
    let mut used = 0usize;
    for candidate in candidates {
        if kept.len() >= k {
            break;
        }
        if used + candidate.segment.char_len > char_budget {
            break;
        }
        used += candidate.segment.char_len;
        kept.push(candidate.clone());
    }
    kept
}
