//! Synthetic dataset generation for hermetic tests and demos.
//!
//! Samples follow the pipeline's line-delimited input contract. Every
//! sample asks for a value that is planted verbatim inside the first
//! search result's HTML, so a retrieval strategy that surfaces the right
//! segment lets a rule-driven stub model answer correctly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde_json::json;

const DOMAINS: [&str; 5] = ["finance", "music", "movie", "sports", "open"];
const DYNAMISM: [&str; 4] = ["static", "slow-changing", "fast-changing", "real-time"];
const POPULARITY: [&str; 3] = ["head", "torso", "tail"];

/// Deterministic description of one synthetic sample.
pub struct SyntheticSample {
    pub id: String,
    pub question: String,
    pub answer: String,
    /// Token planted in the gold document; rule patterns can key on it.
    pub gold_token: String,
}

/// Writes `n` synthetic samples for `task` ("task1" | "task2" | "task3")
/// and returns their descriptions in file order.
pub fn write_synthetic_dataset(
    path: &Path,
    task: &str,
    n: usize,
    seed: u64,
) -> std::io::Result<Vec<SyntheticSample>> {
    let file = File::create(path)?;
    let mut writer = BufWriter::new(file);
    let mut described = Vec::with_capacity(n);
    for i in 0..n {
        let (line, sample) = synthetic_sample_line(task, i, seed);
        writeln!(writer, "{line}")?;
        described.push(sample);
    }
    writer.flush()?;
    Ok(described)
}

/// Builds one sample as a JSON line plus its description.
pub fn synthetic_sample_line(task: &str, index: usize, seed: u64) -> (String, SyntheticSample) {
    let value = 1000 + (seed.wrapping_mul(31).wrapping_add(index as u64 * 7) % 9000);
    let gold_token = format!("ITEM{seed}X{index}");
    let id = format!("{task}-{index:03}");
    let question = format!("what is the stored value for {gold_token}?");
    let answer = value.to_string();

    let n_docs = if task == "task3" { 8 } else { 3 };
    let mut results = Vec::with_capacity(n_docs);
    for doc in 0..n_docs {
        let html = if doc == 0 {
            format!(
                "<html><body><div><p>The stored value for {gold_token} is {value}.</p></div>\
<p>Records update nightly and are archived by the registry.</p></body></html>"
            )
        } else {
            format!(
                "<html><body><p>Unrelated catalog page {doc} for sample {index}: inventory \
listings, shipment notes, and assorted filler text about other items.</p></body></html>"
            )
        };
        results.push(json!({
            "page_name": format!("page {doc}"),
            "page_url": format!("http://fixture.test/{id}/{doc}"),
            "page_snippet": if doc == 1 { format!("catalog overview {index}") } else { String::new() },
            "page_html": html,
        }));
    }

    let line = json!({
        "id": id,
        "question": question,
        "query_time": "03/05/2024, 23:20:00 PT",
        "task": task,
        "search_results": results,
        "answer": answer,
        "domain": DOMAINS[index % DOMAINS.len()],
        "question_type": "simple",
        "static_or_dynamic": DYNAMISM[index % DYNAMISM.len()],
        "popularity": POPULARITY[index % POPULARITY.len()],
    })
    .to_string();

    (
        line,
        SyntheticSample {
            id,
            question,
            answer,
            gold_token,
        },
    )
}
