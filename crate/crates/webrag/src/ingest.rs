//! Dataset loading and validation.
//!
//! A dataset is a UTF-8 file of line-delimited JSON records, one sample per
//! line. Required keys: `id`, `question`, `task`, `search_results` (array of
//! `{page_name, page_url, page_snippet, page_html}`). Optional keys:
//! `query_time`, `answer`, `domain`, `question_type`, `static_or_dynamic`,
//! `popularity`. Malformed lines are skipped and counted, never fatal;
//! downstream stages must cope with empty or broken HTML, so the loader does
//! not inspect `page_html` at all.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// `question_type` value whose samples are false-premise questions.
/// Curation never relabels these to a missing target.
pub const FALSE_PREMISE_LABEL: &str = "false_premise";

/// Which task mode a sample belongs to. Task 1 and 2 ship five candidate
/// documents; Task 3 ships fifty and additionally stresses throughput.
/// Tasks 2 and 3 may call the knowledge-graph API.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskKind {
    Task1,
    Task2,
    Task3,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::Task1, TaskKind::Task2, TaskKind::Task3];

    /// Document cap per sample for this task.
    pub fn max_documents(self) -> usize {
        match self {
            TaskKind::Task1 | TaskKind::Task2 => 5,
            TaskKind::Task3 => 50,
        }
    }

    /// Whether samples of this task may query the knowledge-graph API.
    pub fn uses_kg(self) -> bool {
        !matches!(self, TaskKind::Task1)
    }

    pub fn label(self) -> &'static str {
        match self {
            TaskKind::Task1 => "task1",
            TaskKind::Task2 => "task2",
            TaskKind::Task3 => "task3",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "task1" | "1" => Ok(TaskKind::Task1),
            "task2" | "2" => Ok(TaskKind::Task2),
            "task3" | "3" => Ok(TaskKind::Task3),
            other => Err(format!("unknown task {other:?} (expected task1|task2|task3)")),
        }
    }
}

impl Serialize for TaskKind {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for TaskKind {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        // Accept both the string form ("task2") and the bare number (2).
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(n) => n.to_string().parse().map_err(D::Error::custom),
            Raw::Text(s) => s.parse().map_err(D::Error::custom),
        }
    }
}

/// One retrieved web search result. `page_html` may be empty or malformed;
/// the segmenter is responsible for coping.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResult {
    #[serde(default)]
    pub page_name: String,
    #[serde(default)]
    pub page_url: String,
    #[serde(default)]
    pub page_snippet: String,
    #[serde(default)]
    pub page_html: String,
}

/// One question-answering instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub question: String,
    /// Opaque timestamp string, passed into prompts verbatim.
    #[serde(default)]
    pub query_time: String,
    pub task: TaskKind,
    #[serde(default)]
    pub search_results: Vec<SearchResult>,
    /// Ground-truth answer, when the dataset carries labels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, rename = "domain", skip_serializing_if = "Option::is_none")]
    pub domain_tag: Option<String>,
    #[serde(default, rename = "question_type", skip_serializing_if = "Option::is_none")]
    pub question_type_tag: Option<String>,
    #[serde(default, rename = "static_or_dynamic", skip_serializing_if = "Option::is_none")]
    pub dynamism_tag: Option<String>,
    #[serde(default, rename = "popularity", skip_serializing_if = "Option::is_none")]
    pub popularity_tag: Option<String>,
}

impl Sample {
    /// Derived, not stored: a sample is a false-premise question iff its
    /// question type tag says so. Single source of truth for the curation
    /// exception rule.
    pub fn false_premise(&self) -> bool {
        self.question_type_tag.as_deref() == Some(FALSE_PREMISE_LABEL)
    }
}

/// A violation found by [`validate_sample`]. Names the offending field and
/// the rule it breaks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

/// Pure invariant check. Empty result means the sample is well-formed.
pub fn validate_sample(sample: &Sample) -> Vec<Violation> {
    let mut violations = Vec::new();
    let cap = sample.task.max_documents();
    if sample.search_results.len() > cap {
        violations.push(Violation {
            field: "search_results",
            rule: format!(
                "{} carries {} search results, over the {} limit of {}",
                sample.id,
                sample.search_results.len(),
                sample.task,
                cap
            ),
        });
    }
    if sample.id.is_empty() {
        violations.push(Violation {
            field: "id",
            rule: "id must be non-empty".to_string(),
        });
    }
    violations
}

/// Per-load bookkeeping: how many lines were dropped and why.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub parsed: usize,
    pub skipped_malformed: usize,
    pub skipped_task_violation: usize,
    pub skipped_duplicate_id: usize,
}

impl LoadStats {
    pub fn skipped(&self) -> usize {
        self.skipped_malformed + self.skipped_task_violation + self.skipped_duplicate_id
    }
}

/// An ordered, immutable collection of samples. Iteration order is file
/// order; loading the same file twice yields identical datasets.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub source_path: String,
    pub stats: LoadStats,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read dataset file {path}: {source}")]
    FileUnreadable {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("dataset {path} contains no well-formed samples")]
    EmptyDataset { path: String },
}

/// Loads a line-delimited dataset. `task` is the run's task mode: records
/// missing a `task` key inherit it, and every sample is checked against its
/// task's document limit. Malformed lines, limit violations, and duplicate
/// ids are skipped with counters, never fatal.
pub fn load_dataset(path: &Path, task: TaskKind) -> Result<Dataset, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::FileUnreadable {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);

    // Records may omit `task`; parse into a shadow struct and fill it in.
    #[derive(Deserialize)]
    struct RawSample {
        id: String,
        question: String,
        #[serde(default)]
        query_time: String,
        #[serde(default)]
        task: Option<TaskKind>,
        #[serde(default)]
        search_results: Vec<SearchResult>,
        #[serde(default)]
        answer: Option<String>,
        #[serde(default)]
        domain: Option<String>,
        #[serde(default)]
        question_type: Option<String>,
        #[serde(default)]
        static_or_dynamic: Option<String>,
        #[serde(default)]
        popularity: Option<String>,
    }

    let mut stats = LoadStats::default();
    let mut seen_ids = HashSet::new();
    let mut samples = Vec::new();

    for line in reader.lines() {
        let line = line.map_err(|source| IngestError::FileUnreadable {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawSample = match serde_json::from_str(&line) {
            Ok(raw) => raw,
            Err(_) => {
                stats.skipped_malformed += 1;
                continue;
            }
        };
        stats.parsed += 1;
        let sample = Sample {
            id: raw.id,
            question: raw.question,
            query_time: raw.query_time,
            task: raw.task.unwrap_or(task),
            search_results: raw.search_results,
            answer: raw.answer,
            domain_tag: raw.domain,
            question_type_tag: raw.question_type,
            dynamism_tag: raw.static_or_dynamic,
            popularity_tag: raw.popularity,
        };
        if !validate_sample(&sample).is_empty() {
            stats.skipped_task_violation += 1;
            continue;
        }
        if !seen_ids.insert(sample.id.clone()) {
            stats.skipped_duplicate_id += 1;
            continue;
        }
        samples.push(sample);
    }

    if stats.parsed == 0 {
        return Err(IngestError::EmptyDataset {
            path: path.display().to_string(),
        });
    }

    Ok(Dataset {
        samples,
        source_path: path.display().to_string(),
        stats,
    })
}

/// Writes samples back out as line-delimited JSON, one per line, in order.
pub fn write_samples<W: Write>(samples: &[Sample], mut writer: W) -> io::Result<()> {
    for sample in samples {
        let line = serde_json::to_string(sample).map_err(io::Error::other)?;
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;
    use tempfile::NamedTempFile;

    fn sample_json(id: &str, task: &str, n_results: usize) -> String {
        let results: Vec<serde_json::Value> = (0..n_results)
            .map(|i| {
                serde_json::json!({
                    "page_name": format!("page {i}"),
                    "page_url": format!("http://example.test/{i}"),
                    "page_snippet": "",
                    "page_html": "<p>hi</p>",
                })
            })
            .collect();
        serde_json::json!({
            "id": id,
            "question": "q",
            "task": task,
            "search_results": results,
        })
        .to_string()
    }

    fn write_lines(lines: &[&str]) -> NamedTempFile {
        let mut file = NamedTempFile::new().unwrap();
        for line in lines {
            writeln!(file, "{line}").unwrap();
        }
        file.flush().unwrap();
        file
    }

    #[test]
    fn empty_file_is_empty_dataset() {
        let file = NamedTempFile::new().unwrap();
        let err = load_dataset(file.path(), TaskKind::Task1).unwrap_err();
        assert!(matches!(err, IngestError::EmptyDataset { .. }));
    }

    #[test]
    fn minimal_record_loads() {
        let line = sample_json("s1", "task1", 1);
        let file = write_lines(&[&line]);
        let ds = load_dataset(file.path(), TaskKind::Task1).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.samples[0].question, "q");
        assert!(!ds.samples[0].false_premise());
        assert_eq!(ds.stats.skipped(), 0);
    }

    #[test]
    fn truncated_line_is_skipped_and_counted() {
        let a = sample_json("s1", "task1", 1);
        let b = sample_json("s2", "task1", 1);
        let truncated = &a[..a.len() / 2];
        let file = write_lines(&[&a, truncated, &b]);
        let ds = load_dataset(file.path(), TaskKind::Task1).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.stats.skipped_malformed, 1);
    }

    #[test]
    fn task_limit_violation_skips_sample() {
        let ok = sample_json("s1", "task1", 5);
        let over = sample_json("s2", "task1", 6);
        let file = write_lines(&[&ok, &over]);
        let ds = load_dataset(file.path(), TaskKind::Task1).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.stats.skipped_task_violation, 1);
    }

    #[test]
    fn duplicate_ids_are_dropped() {
        let a = sample_json("s1", "task1", 1);
        let file = write_lines(&[&a, &a]);
        let ds = load_dataset(file.path(), TaskKind::Task1).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.stats.skipped_duplicate_id, 1);
    }

    #[test]
    fn validate_sample_limits() {
        let mk = |task: TaskKind, n: usize| Sample {
            id: "s".into(),
            question: "q".into(),
            query_time: String::new(),
            task,
            search_results: vec![SearchResult::default(); n],
            answer: None,
            domain_tag: None,
            question_type_tag: None,
            dynamism_tag: None,
            popularity_tag: None,
        };
        assert!(validate_sample(&mk(TaskKind::Task1, 5)).is_empty());
        let violations = validate_sample(&mk(TaskKind::Task1, 6));
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].field, "search_results");
        assert!(validate_sample(&mk(TaskKind::Task3, 50)).is_empty());
    }

    #[test]
    fn task_field_accepts_numbers_and_strings() {
        for (raw, want) in [("\"task2\"", TaskKind::Task2), ("3", TaskKind::Task3)] {
            let task: TaskKind = serde_json::from_str(raw).unwrap();
            assert_eq!(task, want);
        }
    }

    #[test]
    fn false_premise_is_derived_from_question_type() {
        let line = serde_json::json!({
            "id": "s1",
            "question": "q",
            "task": "task1",
            "search_results": [],
            "question_type": FALSE_PREMISE_LABEL,
        })
        .to_string();
        let file = write_lines(&[&line]);
        let ds = load_dataset(file.path(), TaskKind::Task1).unwrap();
        assert!(ds.samples[0].false_premise());
    }

    #[test]
    fn round_trip_preserves_fields_and_order() {
        let lines: Vec<String> = (0..4)
            .map(|i| {
                serde_json::json!({
                    "id": format!("s{i}"),
                    "question": format!("question {i}"),
                    "query_time": "03/05/2024, 23:20:00 PT",
                    "task": "task2",
                    "search_results": [{
                        "page_name": "n",
                        "page_url": "u",
                        "page_snippet": "sn",
                        "page_html": "<p>x</p>",
                    }],
                    "answer": format!("a{i}"),
                    "domain": "finance",
                    "question_type": "simple",
                    "static_or_dynamic": "static",
                    "popularity": "head",
                })
                .to_string()
            })
            .collect();
        let refs: Vec<&str> = lines.iter().map(String::as_str).collect();
        let file = write_lines(&refs);
        let first = load_dataset(file.path(), TaskKind::Task2).unwrap();

        let mut buf = Vec::new();
        write_samples(&first.samples, &mut buf).unwrap();
        let mut rewritten = NamedTempFile::new().unwrap();
        rewritten.write_all(&buf).unwrap();
        rewritten.flush().unwrap();
        let second = load_dataset(rewritten.path(), TaskKind::Task2).unwrap();

        assert_eq!(first.samples, second.samples);
    }
}
