//! Text rerank scoring, shared by the entity-chunk and web-chunk pipelines.
//!
//! A live cross-encoder sits behind [`RerankClient`]; when none is
//! configured, the deterministic lexical fallback keeps pipelines fully
//! offline.

use crate::gateway::GatewayError;
use crate::stemming::stemmed_jaccard;

/// Scores (query, passage) pairs; higher is more relevant.
pub trait RerankClient: Send + Sync {
    fn score(&self, query: &str, passage: &str) -> Result<f64, GatewayError>;
}

/// Stemmed-token Jaccard overlap; deterministic and infallible.
pub struct LexicalReranker;

impl RerankClient for LexicalReranker {
    fn score(&self, query: &str, passage: &str) -> Result<f64, GatewayError> {
        Ok(stemmed_jaccard(query, passage))
    }
}

/// Rank passages by client score, descending, stable for equal scores.
/// Returns indices into `passages`.
pub fn rank_passages(
    client: &dyn RerankClient,
    query: &str,
    passages: &[&str],
) -> Result<Vec<usize>, GatewayError> {
    let mut scored: Vec<(usize, f64)> = Vec::with_capacity(passages.len());
    for (i, passage) in passages.iter().enumerate() {
        scored.push((i, client.score(query, passage)?));
    }
    // stable sort keeps input order for equal scores
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    Ok(scored.into_iter().map(|(i, _)| i).collect())
}
