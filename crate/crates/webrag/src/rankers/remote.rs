//! HTTP clients for the embedding and cross-encoder scoring services.
//!
//! Wire contracts:
//!
//! - embedding: `POST {base}/embed` with `{"texts": [..]}` returning
//!   `{"vectors": [[..]]}`
//! - cross-encoder: `POST {base}/score` with `{"query": .., "passages": [..]}`
//!   returning `{"scores": [..]}`

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::RankError;
use crate::segmenter::Segment;

const DEFAULT_BATCH_SIZE: usize = 32;

#[derive(Debug, Clone)]
pub struct EmbedClient {
    http: reqwest::Client,
    base_url: String,
    timeout: Duration,
    batch_size: usize,
}

#[derive(Debug, Clone)]
pub struct CrossClient {
    http: reqwest::Client,
    base_url: String,
    timeout: Duration,
    batch_size: usize,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct CrossRequest<'a> {
    query: &'a str,
    passages: &'a [String],
}

#[derive(Deserialize)]
struct CrossResponse {
    scores: Vec<f64>,
}

impl EmbedClient {
    pub fn new(base_url: &str, timeout_ms: u64) -> Self {
        EmbedClient {
            http: reqwest::Client::new(),
            base_url: base_url.trim_end_matches('/').to_string(),
            timeout: Duration::from_millis(timeout_ms),
            batch_size: DEFAULT_BATCH_SIZE,
        }
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    /// Embeds texts in request batches, preserving order.
    pub async fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, RankError> {
        let url = format!("{}/embed", self.base_url);
        let mut vectors = Vec::with_capacity(texts.len());
        for batch in texts.chunks(self.batch_size) {
            let response = self
                .http
                .post(&url)
                .timeout(self.timeout)
                .json(&EmbedRequest { texts: batch })
                .send()
                .await
                .map_err(|e| service_unavailable(&url, &e.to_string()))?;
            if !response.status().is_success() {
                return Err(service_unavailable(
                    &url,
                    &format!("http status {}", response.status()),
                ));
            }
            let parsed: EmbedResponse = response
                .json()
                .await
                .map_err(|e| service_unavailable(&url, &e.to_string()))?;
            if parsed.vectors.len() != batch.len() {
                return Err(RankError::LengthMismatch {
                    expected: batch.len(),
                    got: parsed.vectors.len(),
                });
            }
            vectors.extend(parsed.vectors);
        }
        Ok(vectors)
    }
}

impl CrossClient {
    pub fn new(base_url: &str, timeout_ms: u64) -> Self {
        CrossClient {
            http: reqwest::Client::new(),
            base_url: base_url.trim_end_matches('/').to_string(),
            timeout: Duration::from_millis(timeout_ms),
            batch_size: DEFAULT_BATCH_SIZE,
        }
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    async fn score_batch(&self, query: &str, passages: &[String]) -> Result<Vec<f64>, RankError> {
        let url = format!("{}/score", self.base_url);
        let response = self
            .http
            .post(&url)
            .timeout(self.timeout)
            .json(&CrossRequest { query, passages })
            .send()
            .await
            .map_err(|e| service_unavailable(&url, &e.to_string()))?;
        if !response.status().is_success() {
            return Err(service_unavailable(
                &url,
                &format!("http status {}", response.status()),
            ));
        }
        let parsed: CrossResponse = response
            .json()
            .await
            .map_err(|e| service_unavailable(&url, &e.to_string()))?;
        if parsed.scores.len() != passages.len() {
            return Err(RankError::LengthMismatch {
                expected: passages.len(),
                got: parsed.scores.len(),
            });
        }
        Ok(parsed.scores)
    }
}

fn service_unavailable(url: &str, detail: &str) -> RankError {
    RankError::ServiceUnavailable {
        url: url.to_string(),
        detail: detail.to_string(),
    }
}

/// Biencoder scoring: embeds the question and every segment, unit-normalizes
/// on this side regardless of server behavior, and returns dot products in
/// segment order.
pub async fn score_dense(
    client: &EmbedClient,
    question: &str,
    segments: &[Segment],
) -> Result<Vec<f64>, RankError> {
    if segments.is_empty() {
        return Ok(Vec::new());
    }
    let mut texts = Vec::with_capacity(segments.len() + 1);
    texts.push(question.to_string());
    texts.extend(segments.iter().map(|s| s.text.clone()));
    let mut vectors = client.embed(&texts).await?;

    let question_vec = unit(vectors.remove(0));
    let dim = question_vec.len();
    let mut scores = Vec::with_capacity(segments.len());
    for vector in vectors {
        if vector.len() != dim {
            return Err(RankError::DimensionMismatch {
                expected: dim,
                got: vector.len(),
            });
        }
        let v = unit(vector);
        scores.push(question_vec.iter().zip(&v).map(|(a, b)| a * b).sum());
    }
    Ok(scores)
}

/// Cross-encoder scoring: ships (question, segment text) pairs in batches
/// and returns one score per segment, in order.
pub async fn score_cross(
    client: &CrossClient,
    question: &str,
    segments: &[Segment],
) -> Result<Vec<f64>, RankError> {
    if segments.is_empty() {
        return Ok(Vec::new());
    }
    let texts: Vec<String> = segments.iter().map(|s| s.text.clone()).collect();
    let mut scores = Vec::with_capacity(texts.len());
    for batch in texts.chunks(client.batch_size) {
        scores.extend(client.score_batch(question, batch).await?);
    }
    Ok(scores)
}

fn unit(mut vector: Vec<f64>) -> Vec<f64> {
    let norm = vector.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in &mut vector {
            *v /= norm;
        }
    }
    vector
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmenter::SegmentOrigin;
    use serde_json::json;
    use webrag_testkit::{hash_vector, serve_fixed_json, CrossMode, StubCross, StubEmbed};

    fn seg(text: &str) -> Segment {
        Segment::new(0, text.to_string(), SegmentOrigin::WebPage, vec![])
    }

    #[tokio::test]
    async fn dense_scores_match_independent_dot_products() {
        let stub = StubEmbed::new(64, 3).serve(0).await.unwrap();
        let client = EmbedClient::new(&stub.url(), 2_000);
        let question = "which item holds the answer?";
        let segments: Vec<Segment> =
            (0..5).map(|i| seg(&format!("candidate passage number {i}"))).collect();
        let scores = score_dense(&client, question, &segments).await.unwrap();

        // recompute outside the module from the stub's hash definition
        let q = hash_vector(question, 64, 3);
        for (i, segment) in segments.iter().enumerate() {
            let v = hash_vector(&segment.text, 64, 3);
            let expected: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
            assert!((scores[i] - expected).abs() < 1e-9);
        }
    }

    #[tokio::test]
    async fn identical_text_embeds_to_cosine_one() {
        let stub = StubEmbed::new(64, 0).serve(0).await.unwrap();
        let client = EmbedClient::new(&stub.url(), 2_000);
        let scores = score_dense(&client, "same text", &[seg("same text")]).await.unwrap();
        assert!((scores[0] - 1.0).abs() < 1e-9);
    }

    #[tokio::test]
    async fn mismatched_dimensions_are_an_error() {
        // one 2-d vector for the question, one 3-d for the segment
        let stub = serve_fixed_json(json!({"vectors": [[1.0, 0.0], [1.0, 0.0, 0.0]]}))
            .await
            .unwrap();
        let client = EmbedClient::new(&stub.url(), 2_000);
        let err = score_dense(&client, "q", &[seg("text")]).await.unwrap_err();
        assert!(matches!(err, RankError::DimensionMismatch { expected: 2, got: 3 }));
    }

    #[tokio::test]
    async fn cross_scores_follow_stub_rule() {
        let stub = StubCross::new(CrossMode::TokenOverlap).serve(0).await.unwrap();
        let client = CrossClient::new(&stub.url(), 2_000);
        let segments = vec![seg("red fox den"), seg("blue sea")];
        let scores = score_cross(&client, "red fox", &segments).await.unwrap();
        assert_eq!(scores.len(), 2);
        assert!(scores[0] > scores[1]);
        assert!((scores[0] - 1.0).abs() < 1e-12);
        assert_eq!(scores[1], 0.0);
    }

    #[tokio::test]
    async fn cross_empty_input_is_empty() {
        let stub = StubCross::new(CrossMode::TokenOverlap).serve(0).await.unwrap();
        let client = CrossClient::new(&stub.url(), 2_000);
        let scores = score_cross(&client, "anything", &[]).await.unwrap();
        assert!(scores.is_empty());
    }

    #[tokio::test]
    async fn wrong_score_count_is_an_error() {
        let stub = serve_fixed_json(json!({"scores": [0.5, 0.25, 0.75]})).await.unwrap();
        let client = CrossClient::new(&stub.url(), 2_000);
        let err = score_cross(&client, "q", &[seg("one"), seg("two")]).await.unwrap_err();
        assert!(matches!(err, RankError::LengthMismatch { expected: 2, got: 3 }));
    }

    #[tokio::test]
    async fn unreachable_scorer_is_service_unavailable() {
        let client = CrossClient::new("http://127.0.0.1:1", 300);
        let err = score_cross(&client, "q", &[seg("one")]).await.unwrap_err();
        assert!(matches!(err, RankError::ServiceUnavailable { .. }));
    }

    #[tokio::test]
    async fn batching_preserves_order() {
        let stub = StubEmbed::new(32, 1).serve(0).await.unwrap();
        let client = EmbedClient::new(&stub.url(), 2_000).with_batch_size(2);
        let segments: Vec<Segment> = (0..7).map(|i| seg(&format!("passage {i}"))).collect();
        let batched = score_dense(&client, "q", &segments).await.unwrap();
        let unbatched_client = EmbedClient::new(&stub.url(), 2_000).with_batch_size(100);
        let unbatched = score_dense(&unbatched_client, "q", &segments).await.unwrap();
        assert_eq!(batched, unbatched);
    }
}
