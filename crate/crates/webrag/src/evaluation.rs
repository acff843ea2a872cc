//! Verdicts and metrics.
//!
//! Every evaluated answer is exactly one of correct (+1), missing (0), or
//! hallucinated (-1); the aggregate score is therefore
//! `accuracy - hallucination_rate`. Reports break down by the sample facet
//! tags (domain, question type, dynamism, popularity). Records the judge
//! could not evaluate are excluded with a counter — the evaluator never
//! invents a verdict.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generation::{normalize_answer, AnswerRecord};
use crate::ingest::Sample;
use crate::llm::{LlmClient, LlmError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Correct,
    Missing,
    Hallucinated,
}

/// How correctness is decided: strict normalized string equality, or the
/// LLM judge. Reports always carry the mode used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeMode {
    ExactMatch,
    LlmJudge,
}

impl std::str::FromStr for JudgeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "exact" | "exact-match" | "exact_match" => Ok(JudgeMode::ExactMatch),
            "llm" | "llm-judge" | "llm_judge" | "judge" => Ok(JudgeMode::LlmJudge),
            other => Err(format!("unknown judge mode {other:?}")),
        }
    }
}

/// Facet tags copied from the sample for breakdowns.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Facets {
    pub domain: Option<String>,
    pub question_type: Option<String>,
    pub dynamism: Option<String>,
    pub popularity: Option<String>,
}

impl Facets {
    pub fn from_sample(sample: &Sample) -> Self {
        Facets {
            domain: sample.domain_tag.clone(),
            question_type: sample.question_type_tag.clone(),
            dynamism: sample.dynamism_tag.clone(),
            popularity: sample.popularity_tag.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub sample_id: String,
    pub verdict: Verdict,
    pub judge_mode: JudgeMode,
    #[serde(default)]
    pub facets: Facets,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no records to aggregate")]
    EmptyRecords,
    #[error("judge failed for sample {sample_id}: {source}")]
    Unevaluable {
        sample_id: String,
        #[source]
        source: LlmError,
    },
}

/// Classifies one answer. An explicit miss is Missing without consulting
/// any judge; otherwise exact-match compares normalized strings and judge
/// mode asks the LLM judge. A judge failure is an error — the record must
/// be excluded, not defaulted.
pub async fn classify_answer(
    answer: &AnswerRecord,
    question: &str,
    truth: &str,
    judge_mode: JudgeMode,
    judge: Option<&LlmClient>,
) -> Result<Verdict, EvalError> {
    debug_assert!(!truth.is_empty(), "ground truth must be non-empty");
    if answer.is_miss {
        return Ok(Verdict::Missing);
    }
    let correct = match judge_mode {
        JudgeMode::ExactMatch => answer.normalized == normalize_answer(truth),
        JudgeMode::LlmJudge => {
            let judge = judge.expect("LlmJudge mode requires a judge client");
            judge
                .judge_correct(question, truth, &answer.raw_text)
                .await
                .map_err(|source| EvalError::Unevaluable {
                    sample_id: answer.sample_id.clone(),
                    source,
                })?
        }
    };
    Ok(if correct { Verdict::Correct } else { Verdict::Hallucinated })
}

/// Aggregate rates over a record set. The identities
/// `accuracy + missing_rate + hallucination_rate == 1` and
/// `score == accuracy - hallucination_rate` hold exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub accuracy: f64,
    pub missing_rate: f64,
    pub hallucination_rate: f64,
    pub crag: f64,
}

impl MetricsReport {
    /// Builds a report from verdict counts.
    pub fn from_counts(correct: usize, missing: usize, hallucinated: usize) -> Self {
        let n = correct + missing + hallucinated;
        let denom = n.max(1) as f64;
        MetricsReport {
            n,
            accuracy: correct as f64 / denom,
            missing_rate: missing as f64 / denom,
            hallucination_rate: hallucinated as f64 / denom,
            crag: (correct as f64 - hallucinated as f64) / denom,
        }
    }
}

/// Computes the aggregate report over all records.
pub fn crag_score(records: &[EvalRecord]) -> Result<MetricsReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyRecords);
    }
    let correct = records.iter().filter(|r| r.verdict == Verdict::Correct).count();
    let missing = records.iter().filter(|r| r.verdict == Verdict::Missing).count();
    let hallucinated = records
        .iter()
        .filter(|r| r.verdict == Verdict::Hallucinated)
        .count();
    Ok(MetricsReport::from_counts(correct, missing, hallucinated))
}

/// Aggregate plus per-facet sub-reports keyed facet name, then value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacetedReport {
    pub judge_mode: JudgeMode,
    pub overall: MetricsReport,
    pub by_facet: BTreeMap<String, BTreeMap<String, MetricsReport>>,
}

/// Groups records by each facet dimension; untagged records are omitted
/// from that dimension (empty groups never appear).
pub fn facet_breakdown(
    records: &[EvalRecord],
) -> BTreeMap<String, BTreeMap<String, MetricsReport>> {
    let dimensions: [(&str, fn(&Facets) -> Option<&String>); 4] = [
        ("domain", |f| f.domain.as_ref()),
        ("question_type", |f| f.question_type.as_ref()),
        ("dynamism", |f| f.dynamism.as_ref()),
        ("popularity", |f| f.popularity.as_ref()),
    ];
    let mut by_facet = BTreeMap::new();
    for (name, accessor) in dimensions {
        let mut groups: BTreeMap<String, Vec<&EvalRecord>> = BTreeMap::new();
        for record in records {
            if let Some(value) = accessor(&record.facets) {
                groups.entry(value.clone()).or_default().push(record);
            }
        }
        let mut reports = BTreeMap::new();
        for (value, group) in groups {
            let correct = group.iter().filter(|r| r.verdict == Verdict::Correct).count();
            let missing = group.iter().filter(|r| r.verdict == Verdict::Missing).count();
            let hallucinated = group
                .iter()
                .filter(|r| r.verdict == Verdict::Hallucinated)
                .count();
            reports.insert(value, MetricsReport::from_counts(correct, missing, hallucinated));
        }
        if !reports.is_empty() {
            by_facet.insert(name.to_string(), reports);
        }
    }
    by_facet
}

/// Overall report plus every facet breakdown.
pub fn full_report(records: &[EvalRecord], judge_mode: JudgeMode) -> Result<FacetedReport, EvalError> {
    Ok(FacetedReport {
        judge_mode,
        overall: crag_score(records)?,
        by_facet: facet_breakdown(records),
    })
}

/// Aligned text table: Model/Run, Accuracy, Hallucination, CRAG.
pub fn render_table(rows: &[(String, MetricsReport)]) -> String {
    let label_width = rows
        .iter()
        .map(|(label, _)| label.len())
        .chain(std::iter::once("Model/Run".len()))
        .max()
        .unwrap_or(0);
    let mut out = format!(
        "{:<label_width$}  {:>8}  {:>13}  {:>7}\n",
        "Model/Run", "Accuracy", "Hallucination", "CRAG"
    );
    for (label, report) in rows {
        out.push_str(&format!(
            "{:<label_width$}  {:>8.4}  {:>13.4}  {:>7.4}\n",
            label, report.accuracy, report.hallucination_rate, report.crag
        ));
    }
    out
}

/// Aligned text table for retrieval comparisons: Retrieval Model, Accuracy, CRAG.
pub fn render_retrieval_table(rows: &[(String, MetricsReport)]) -> String {
    let label_width = rows
        .iter()
        .map(|(label, _)| label.len())
        .chain(std::iter::once("Retrieval Model".len()))
        .max()
        .unwrap_or(0);
    let mut out = format!(
        "{:<label_width$}  {:>8}  {:>7}\n",
        "Retrieval Model", "Accuracy", "CRAG"
    );
    for (label, report) in rows {
        out.push_str(&format!(
            "{:<label_width$}  {:>8.4}  {:>7.4}\n",
            label, report.accuracy, report.crag
        ));
    }
    out
}
