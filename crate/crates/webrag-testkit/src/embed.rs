//! Embedding stub: seeded hash vectors.

use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::routing::post;
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::{record, spawn_router, RecordedRequest, StubError, StubHandle};

/// `POST /embed {texts} -> {vectors}`. Each vector is a unit-normalized
/// expansion of `sha256(seed, text, lane)`, so equal texts always embed
/// identically and distinct texts are almost surely non-parallel.
pub struct StubEmbed {
    dim: usize,
    seed: u64,
}

struct EmbedState {
    dim: usize,
    seed: u64,
    log: crate::RequestLog,
}

#[derive(Deserialize)]
struct EmbedRequest {
    texts: Vec<String>,
}

impl StubEmbed {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0);
        StubEmbed { dim, seed }
    }

    pub async fn serve(self, port: u16) -> Result<StubHandle, StubError> {
        let log: crate::RequestLog = Arc::new(Mutex::new(Vec::new()));
        let state = Arc::new(EmbedState {
            dim: self.dim,
            seed: self.seed,
            log: log.clone(),
        });
        let router = Router::new()
            .route("/embed", post(embed_handler))
            .with_state(state);
        spawn_router(router, port, log).await
    }
}

async fn embed_handler(
    State(state): State<Arc<EmbedState>>,
    Json(request): Json<EmbedRequest>,
) -> Json<Value> {
    record(
        &state.log,
        RecordedRequest {
            path: "/embed".to_string(),
            model: None,
            content: request.texts.join("\n"),
        },
    );
    let vectors: Vec<Vec<f64>> = request
        .texts
        .iter()
        .map(|text| hash_vector(text, state.dim, state.seed))
        .collect();
    Json(json!({ "vectors": vectors }))
}

/// Deterministic pseudo-embedding in `[-1, 1)^dim`, unit-normalized.
pub fn hash_vector(text: &str, dim: usize, seed: u64) -> Vec<f64> {
    let mut vector: Vec<f64> = (0..dim)
        .map(|lane| {
            let mut hasher = Sha256::new();
            hasher.update(seed.to_le_bytes());
            hasher.update(text.as_bytes());
            hasher.update((lane as u64).to_le_bytes());
            let digest = hasher.finalize();
            let raw = u64::from_le_bytes(digest[..8].try_into().unwrap());
            (raw as f64 / u64::MAX as f64) * 2.0 - 1.0
        })
        .collect();
    let norm = vector.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in &mut vector {
            *v /= norm;
        }
    } else {
        vector[0] = 1.0;
    }
    vector
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_texts_equal_vectors() {
        assert_eq!(hash_vector("abc", 16, 7), hash_vector("abc", 16, 7));
    }

    #[test]
    fn vectors_are_unit_norm() {
        let v = hash_vector("anything", 64, 0);
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
    }

    #[test]
    fn distinct_texts_rarely_parallel() {
        let a = hash_vector("text one", 64, 3);
        let b = hash_vector("text two", 64, 3);
        let cosine: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!(cosine < 0.99);
    }
}
