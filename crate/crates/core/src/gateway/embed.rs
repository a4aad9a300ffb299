//! Embedding backends.

use sha2::{Digest, Sha256};
use std::time::Duration;

use super::{EmbeddingBackend, GatewayError};
use crate::rng::SplitMix64;
use crate::types::EmbeddingVector;

/// Deterministic fixture embedding.
///
/// Algorithm (fixed; retrieval tests depend on it): seed the splitmix64
/// generator with the first 8 little-endian bytes of
/// `SHA-256("mmrag-embed-v1\0" || model_id || "\0" || text)`, draw
/// `dimension` values uniform in [-1, 1), then normalize to unit length.
pub fn fixture_embedding(model_id: &str, text: &str, dimension: usize) -> EmbeddingVector {
    let mut hasher = Sha256::new();
    hasher.update(b"mmrag-embed-v1\0");
    hasher.update(model_id.as_bytes());
    hasher.update(b"\0");
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    let seed = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));

    let mut rng = SplitMix64::new(seed);
    let mut values: Vec<f64> = (0..dimension).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
    let norm: f64 = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        // astronomically unlikely; keep the vector usable anyway
        values[0] = 1.0;
    } else {
        for v in &mut values {
            *v /= norm;
        }
    }
    EmbeddingVector::new(values)
}

/// Fixture embedding backend of a fixed dimension.
pub struct FixtureEmbedder {
    dimension: usize,
}

impl FixtureEmbedder {
    pub fn new(dimension: usize) -> Self {
        Self { dimension }
    }
}

impl EmbeddingBackend for FixtureEmbedder {
    fn embed(&self, model_id: &str, text: &str) -> Result<EmbeddingVector, GatewayError> {
        Ok(fixture_embedding(model_id, text, self.dimension))
    }

    fn dimension(&self) -> usize {
        self.dimension
    }
}

/// Live embedding client: POST `{model, input}`, expect `{"embedding": [..]}`.
pub struct LiveEmbedder {
    endpoint: String,
    token: Option<String>,
    dimension: usize,
    timeout: Duration,
}

impl LiveEmbedder {
    pub fn new(endpoint: impl Into<String>, dimension: usize) -> Self {
        Self {
            endpoint: endpoint.into(),
            token: None,
            dimension,
            timeout: Duration::from_secs(60),
        }
    }

    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.token = token;
        self
    }
}

impl EmbeddingBackend for LiveEmbedder {
    fn embed(&self, model_id: &str, text: &str) -> Result<EmbeddingVector, GatewayError> {
        let agent = ureq::AgentBuilder::new()
            .timeout_read(self.timeout)
            .timeout_write(self.timeout)
            .build();
        let mut request = agent
            .post(&self.endpoint)
            .set("content-type", "application/json");
        if let Some(token) = &self.token {
            request = request.set("authorization", &format!("Bearer {token}"));
        }
        let body = serde_json::json!({"model": model_id, "input": text});
        let response = request.send_string(&body.to_string()).map_err(|e| {
            GatewayError::BackendUnavailable {
                reason: e.to_string(),
            }
        })?;
        let payload: serde_json::Value =
            response
                .into_json()
                .map_err(|e| GatewayError::BackendUnavailable {
                    reason: e.to_string(),
                })?;
        let values: Vec<f64> = payload
            .get("embedding")
            .and_then(|v| v.as_array())
            .map(|arr| arr.iter().filter_map(|v| v.as_f64()).collect())
            .ok_or_else(|| GatewayError::BackendUnavailable {
                reason: "response body carries no embedding".to_string(),
            })?;
        Ok(EmbeddingVector::new(values))
    }

    fn dimension(&self) -> usize {
        self.dimension
    }
}
