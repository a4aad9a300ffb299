//! Web-chunk retrieval: merged-query rewriting (single-turn, cheat, and
//! context-aware), vector search over pre-chunked web text, reranking, and
//! rewrite-preference dataset construction.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::Arc;

use crate::gateway::{GatewayError, ModelGateway, ModelRequest};
use crate::prompts::{
    render, render_history, CONTEXT_REWRITE_TEMPLATE, REWRITE_CHEAT_SUFFIX, REWRITE_TEMPLATE,
};
use crate::rerank::{rank_passages, RerankClient};
use crate::types::{ConversationTurn, EmbeddingVector, Query, Verdict};
use crate::vector::{cosine_similarity, top_k_indices, VectorError};

/// Temperature for preference-pair sampling (the rewrite model is sampled
/// "hot"; deterministic calls use 0).
pub const SAMPLING_TEMPERATURE: f64 = 1.0;
/// How many rewrites to sample per query when building preference pairs.
pub const DEFAULT_REWRITE_SAMPLES: usize = 5;

#[derive(Clone, Debug, thiserror::Error)]
pub enum WebError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Vector(#[from] VectorError),
    #[error("cheat rewrite requires a ground truth")]
    MissingGroundTruth,
    #[error("model returned an empty rewrite")]
    EmptyRewrite,
    #[error("invalid web corpus: {0}")]
    Corpus(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// One pre-chunked unit of web text with its embedding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WebChunk {
    pub id: String,
    pub text: String,
    pub embedding: EmbeddingVector,
    #[serde(default)]
    pub source_url: Option<String>,
}

/// Immutable chunk store; all embeddings share one dimension.
#[derive(Clone, Debug, Default)]
pub struct WebCorpus {
    chunks: Vec<WebChunk>,
    dimension: usize,
}

impl WebCorpus {
    pub fn new(chunks: Vec<WebChunk>) -> Result<Self, WebError> {
        let dimension = chunks.first().map_or(0, |c| c.embedding.dimension());
        let mut seen = HashSet::new();
        for chunk in &chunks {
            if chunk.text.is_empty() {
                return Err(WebError::Corpus(format!(
                    "chunk {} has empty text",
                    chunk.id
                )));
            }
            if !seen.insert(chunk.id.clone()) {
                return Err(WebError::Corpus(format!("duplicate chunk id {}", chunk.id)));
            }
            if chunk.embedding.dimension() != dimension {
                return Err(WebError::Corpus(format!(
                    "chunk {} embedding dimension {} != corpus dimension {dimension}",
                    chunk.id,
                    chunk.embedding.dimension()
                )));
            }
            if !chunk.embedding.is_finite() {
                return Err(WebError::Corpus(format!(
                    "chunk {} embedding not finite",
                    chunk.id
                )));
            }
        }
        Ok(Self { chunks, dimension })
    }

    /// Load from JSONL: `{id, text, embedding, source_url?}` per line.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, WebError> {
        let file = File::open(path.as_ref())
            .map_err(|e| WebError::Corpus(format!("{}: {e}", path.as_ref().display())))?;
        let mut chunks = Vec::new();
        for (line_no, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| WebError::Corpus(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let chunk: WebChunk = serde_json::from_str(&line)
                .map_err(|e| WebError::Corpus(format!("line {}: {e}", line_no + 1)))?;
            chunks.push(chunk);
        }
        Self::new(chunks)
    }

    pub fn chunks(&self) -> &[WebChunk] {
        &self.chunks
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }
}

/// A self-contained text search query. `cheat` marks rewrites built with
/// the ground truth visible; they must never leak into honest evaluation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergedQuery {
    pub text: String,
    pub cheat: bool,
}

/// A (better, worse) rewrite pair for preference training.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewritePreferencePair {
    pub query_id: String,
    pub better: MergedQuery,
    pub worse: MergedQuery,
}

fn first_non_empty_line(text: &str) -> Option<String> {
    text.lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .map(str::to_string)
}

/// Single-turn merged-query rewrite. In cheat mode the ground truth is
/// appended to the prompt so the rewrite can name the right entity.
pub fn rewrite_query(
    gateway: &Arc<ModelGateway>,
    model_id: &str,
    query: &Query,
    include_ground_truth: bool,
) -> Result<MergedQuery, WebError> {
    let mut prompt = render(
        REWRITE_TEMPLATE,
        &[
            ("image", query.image.id.as_str()),
            ("query", query.text.as_str()),
        ],
    );
    if include_ground_truth {
        let gt = query
            .ground_truth
            .as_deref()
            .ok_or(WebError::MissingGroundTruth)?;
        prompt.push('\n');
        prompt.push_str(&render(REWRITE_CHEAT_SUFFIX, &[("ground_truth", gt)]));
    }
    let request = ModelRequest::text(model_id, prompt).with_images(vec![query.image.clone()]);
    let response = gateway.complete(&request)?;
    let text = first_non_empty_line(&response.text).ok_or(WebError::EmptyRewrite)?;
    Ok(MergedQuery {
        text,
        cheat: include_ground_truth,
    })
}

/// Sample `n` rewrites at the hot sampling temperature, one per seed, for
/// preference-pair construction. Each sample is a distinct cache entry, so
/// fixture backends replay them deterministically.
pub fn sample_rewrites(
    gateway: &Arc<ModelGateway>,
    model_id: &str,
    query: &Query,
    n: usize,
) -> Result<Vec<MergedQuery>, WebError> {
    let prompt = render(
        REWRITE_TEMPLATE,
        &[
            ("image", query.image.id.as_str()),
            ("query", query.text.as_str()),
        ],
    );
    let mut samples = Vec::with_capacity(n);
    for seed in 0..n {
        let request = ModelRequest::text(model_id, prompt.clone())
            .with_images(vec![query.image.clone()])
            .with_temperature(SAMPLING_TEMPERATURE)
            .with_seed(seed as i64);
        let response = gateway.complete(&request)?;
        let text = first_non_empty_line(&response.text).ok_or(WebError::EmptyRewrite)?;
        samples.push(MergedQuery { text, cheat: false });
    }
    Ok(samples)
}

/// Keep only the last conversation turn; answering quality with one-step
/// context matches full context, so everything upstream uses this.
pub fn build_one_step_context(history: &[ConversationTurn]) -> Vec<ConversationTurn> {
    history.last().cloned().into_iter().collect()
}

/// Context-aware rewrite for multi-turn queries; the one-step context is
/// rendered as "Q: .. / A: .." lines inside the prompt.
pub fn rewrite_query_with_context(
    gateway: &Arc<ModelGateway>,
    model_id: &str,
    query: &Query,
) -> Result<MergedQuery, WebError> {
    let context = render_history(&build_one_step_context(&query.history));
    let prompt = render(
        CONTEXT_REWRITE_TEMPLATE,
        &[
            ("query", query.text.as_str()),
            ("context", context.as_str()),
        ],
    );
    let request = ModelRequest::text(model_id, prompt).with_images(vec![query.image.clone()]);
    let response = gateway.complete(&request)?;
    let text = first_non_empty_line(&response.text).ok_or(WebError::EmptyRewrite)?;
    Ok(MergedQuery { text, cheat: false })
}

/// Embed the merged query and return the top-k chunks by cosine similarity,
/// ties broken by chunk id ascending.
pub fn search_chunks<'a>(
    gateway: &Arc<ModelGateway>,
    embed_model: &str,
    corpus: &'a WebCorpus,
    merged: &MergedQuery,
    k: usize,
) -> Result<Vec<(&'a WebChunk, f64)>, WebError> {
    if k == 0 {
        return Err(WebError::InvalidParams("k must be at least 1".into()));
    }
    if corpus.is_empty() {
        return Ok(Vec::new());
    }
    let query_embedding = gateway.embed(&merged.text, embed_model)?;
    let mut scores = Vec::with_capacity(corpus.len());
    for chunk in corpus.chunks() {
        scores.push(cosine_similarity(&query_embedding, &chunk.embedding)?);
    }
    let ids: Vec<&str> = corpus.chunks().iter().map(|c| c.id.as_str()).collect();
    Ok(top_k_indices(&scores, &ids, k)
        .into_iter()
        .map(|(i, score)| (&corpus.chunks()[i], score))
        .collect())
}

/// Score (merged query, chunk text) pairs with the reranker and keep the
/// top m; equal scores preserve input order.
pub fn rerank_chunks(
    merged: &MergedQuery,
    chunks: &[WebChunk],
    reranker: &dyn RerankClient,
    m: usize,
) -> Result<Vec<WebChunk>, WebError> {
    if m == 0 {
        return Err(WebError::InvalidParams("m must be at least 1".into()));
    }
    let texts: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
    let ranked = rank_passages(reranker, &merged.text, &texts)?;
    Ok(ranked
        .into_iter()
        .take(m)
        .map(|i| chunks[i].clone())
        .collect())
}

/// Cross the Correct rewrites with the Incorrect ones; Missing verdicts are
/// excluded from both sides, and degenerate pairs with identical text are
/// dropped.
pub fn build_rewrite_preference_pairs(
    query: &Query,
    samples: &[(MergedQuery, Verdict)],
) -> Vec<RewritePreferencePair> {
    let correct: Vec<&MergedQuery> = samples
        .iter()
        .filter(|(_, v)| *v == Verdict::Correct)
        .map(|(m, _)| m)
        .collect();
    let incorrect: Vec<&MergedQuery> = samples
        .iter()
        .filter(|(_, v)| *v == Verdict::Incorrect)
        .map(|(m, _)| m)
        .collect();
    let mut pairs = Vec::with_capacity(correct.len() * incorrect.len());
    for better in &correct {
        for worse in &incorrect {
            if better == worse {
                continue;
            }
            pairs.push(RewritePreferencePair {
                query_id: query.id.clone(),
                better: (*better).clone(),
                worse: (*worse).clone(),
            });
        }
    }
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{cache_key, FixtureBackend, FixtureEmbedder};
    use crate::rerank::LexicalReranker;
    use crate::types::ImageRef;
    use std::collections::HashMap;

    fn fixture_gateway(entries: &[(&ModelRequest, &str)]) -> Arc<ModelGateway> {
        let mut map = HashMap::new();
        for (request, response) in entries {
            map.insert(
                cache_key(request).unwrap().digest().to_string(),
                response.to_string(),
            );
        }
        Arc::new(ModelGateway::new(
            Arc::new(FixtureBackend::new(map)),
            Arc::new(FixtureEmbedder::new(8)),
        ))
    }

    fn rewrite_request(query: &Query, cheat: bool) -> ModelRequest {
        let mut prompt = render(
            REWRITE_TEMPLATE,
            &[
                ("image", query.image.id.as_str()),
                ("query", query.text.as_str()),
            ],
        );
        if cheat {
            prompt.push('\n');
            prompt.push_str(&render(
                REWRITE_CHEAT_SUFFIX,
                &[("ground_truth", query.ground_truth.as_deref().unwrap())],
            ));
        }
        ModelRequest::text("rewriter", prompt).with_images(vec![query.image.clone()])
    }

    fn chunk(id: &str, text: &str, embedding: &[f64]) -> WebChunk {
        WebChunk {
            id: id.into(),
            text: text.into(),
            embedding: EmbeddingVector::new(embedding.to_vec()),
            source_url: None,
        }
    }

    #[test]
    fn rewrite_returns_first_line_with_cheat_flag_false() {
        let query = Query::new(
            "q",
            "When does this car stop production?",
            ImageRef::opaque("img"),
        );
        let gateway = fixture_gateway(&[(
            &rewrite_request(&query, false),
            "When did the Volkswagen Beetle stop production",
        )]);
        let merged = rewrite_query(&gateway, "rewriter", &query, false).unwrap();
        assert_eq!(
            merged.text,
            "When did the Volkswagen Beetle stop production"
        );
        assert!(!merged.cheat);
    }

    #[test]
    fn cheat_rewrite_records_the_flag_and_needs_ground_truth() {
        let query = Query::new(
            "q",
            "When does this car stop production?",
            ImageRef::opaque("img"),
        )
        .with_ground_truth("2019");
        let gateway = fixture_gateway(&[(
            &rewrite_request(&query, true),
            "Volkswagen Beetle end of production 2019",
        )]);
        let merged = rewrite_query(&gateway, "rewriter", &query, true).unwrap();
        assert!(merged.cheat);

        let unlabeled = Query::new("q2", "when", ImageRef::opaque("img"));
        assert!(matches!(
            rewrite_query(&gateway, "rewriter", &unlabeled, true).unwrap_err(),
            WebError::MissingGroundTruth
        ));
    }

    #[test]
    fn empty_rewrite_is_an_error() {
        let query = Query::new("q", "anything", ImageRef::opaque("img"));
        let gateway = fixture_gateway(&[(&rewrite_request(&query, false), "  \n ")]);
        assert!(matches!(
            rewrite_query(&gateway, "rewriter", &query, false).unwrap_err(),
            WebError::EmptyRewrite
        ));
    }

    #[test]
    fn sampled_rewrites_are_distinct_cache_entries() {
        let query = Query::new(
            "q",
            "when did this car stop production",
            ImageRef::opaque("img"),
        );
        let prompt = render(
            REWRITE_TEMPLATE,
            &[
                ("image", "img"),
                ("query", "when did this car stop production"),
            ],
        );
        let request_for_seed = |seed: i64| {
            ModelRequest::text("rewriter", prompt.clone())
                .with_images(vec![query.image.clone()])
                .with_temperature(SAMPLING_TEMPERATURE)
                .with_seed(seed)
        };
        let gateway = fixture_gateway(&[
            (&request_for_seed(0), "rewrite zero"),
            (&request_for_seed(1), "rewrite one"),
            (&request_for_seed(2), "rewrite two"),
        ]);
        let samples = sample_rewrites(&gateway, "rewriter", &query, 3).unwrap();
        let texts: Vec<&str> = samples.iter().map(|m| m.text.as_str()).collect();
        assert_eq!(texts, vec!["rewrite zero", "rewrite one", "rewrite two"]);
        assert!(samples.iter().all(|m| !m.cheat));
    }

    #[test]
    fn one_step_context_keeps_only_the_last_turn() {
        let turns = vec![
            ConversationTurn::new("q1", "a1"),
            ConversationTurn::new("q2", "a2"),
            ConversationTurn::new("q3", "a3"),
        ];
        assert_eq!(
            build_one_step_context(&turns),
            vec![ConversationTurn::new("q3", "a3")]
        );
        assert!(build_one_step_context(&[]).is_empty());
        let single = vec![ConversationTurn::new("q1", "a1")];
        assert_eq!(build_one_step_context(&single), single);
    }

    fn context_request(query: &Query) -> ModelRequest {
        let context = render_history(&build_one_step_context(&query.history));
        let prompt = render(
            CONTEXT_REWRITE_TEMPLATE,
            &[
                ("query", query.text.as_str()),
                ("context", context.as_str()),
            ],
        );
        ModelRequest::text("rewriter", prompt).with_images(vec![query.image.clone()])
    }

    #[test]
    fn context_rewrite_resolves_pronoun_through_history() {
        let query = Query::new(
            "q",
            "when did this car stop production",
            ImageRef::opaque("img"),
        )
        .with_history(vec![
            ConversationTurn::new("what is this", "a street"),
            ConversationTurn::new("what car is this", "Volkswagen Beetle"),
        ]);
        let request = context_request(&query);
        // the prompt must carry only the last turn's Q/A lines
        assert!(request
            .prompt
            .contains("Q: what car is this\nA: Volkswagen Beetle"));
        assert!(!request.prompt.contains("a street"));

        let gateway =
            fixture_gateway(&[(&request, "When did the Volkswagen Beetle stop production")]);
        let merged = rewrite_query_with_context(&gateway, "rewriter", &query).unwrap();
        assert!(merged.text.contains("Volkswagen Beetle"));
        assert!(!merged.cheat);
    }

    #[test]
    fn context_rewrite_with_empty_history_is_valid() {
        let query = Query::new("q", "what is this", ImageRef::opaque("img"));
        let request = context_request(&query);
        assert!(request.prompt.contains("Context: \n") || request.prompt.ends_with("Context: "));
        let gateway = fixture_gateway(&[(&request, "what is this object")]);
        assert!(rewrite_query_with_context(&gateway, "rewriter", &query).is_ok());
    }

    #[test]
    fn context_rewrite_propagates_backend_failure() {
        let query = Query::new("q", "what is this", ImageRef::opaque("img"));
        let gateway = fixture_gateway(&[]);
        assert!(matches!(
            rewrite_query_with_context(&gateway, "rewriter", &query).unwrap_err(),
            WebError::Gateway(_)
        ));
    }

    #[test]
    fn search_single_chunk_corpus() {
        let gateway = fixture_gateway(&[]);
        let embedding = gateway.embed("only chunk", "embedder").unwrap();
        let corpus = WebCorpus::new(vec![chunk("c1", "only chunk", embedding.values())]).unwrap();
        let merged = MergedQuery {
            text: "anything at all".into(),
            cheat: false,
        };
        let hits = search_chunks(&gateway, "embedder", &corpus, &merged, 3).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].0.id, "c1");
    }

    #[test]
    fn query_matching_chunk_embedding_scores_one() {
        let gateway = fixture_gateway(&[]);
        let merged = MergedQuery {
            text: "volkswagen production year".into(),
            cheat: false,
        };
        let query_embedding = gateway.embed(&merged.text, "embedder").unwrap();
        let corpus = WebCorpus::new(vec![
            chunk("match", "irrelevant text", query_embedding.values()),
            chunk("other", "other", &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
        ])
        .unwrap();
        let hits = search_chunks(&gateway, "embedder", &corpus, &merged, 2).unwrap();
        assert_eq!(hits[0].0.id, "match");
        assert!((hits[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn search_matches_exhaustive_scan() {
        let gateway = fixture_gateway(&[]);
        let chunks: Vec<WebChunk> = (0..500)
            .map(|i| {
                let text = format!("chunk number {i}");
                let e = crate::gateway::fixture_embedding("embedder", &text, 8);
                chunk(&format!("c{i:03}"), &text, e.values())
            })
            .collect();
        let corpus = WebCorpus::new(chunks).unwrap();
        let merged = MergedQuery {
            text: "which chunk talks about cars".into(),
            cheat: false,
        };
        let got: Vec<(String, f64)> = search_chunks(&gateway, "embedder", &corpus, &merged, 10)
            .unwrap()
            .into_iter()
            .map(|(c, s)| (c.id.clone(), s))
            .collect();

        // oracle: full sort
        let query_embedding = gateway.embed(&merged.text, "embedder").unwrap();
        let mut all: Vec<(String, f64)> = corpus
            .chunks()
            .iter()
            .map(|c| {
                (
                    c.id.clone(),
                    cosine_similarity(&query_embedding, &c.embedding).unwrap(),
                )
            })
            .collect();
        all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        all.truncate(10);
        assert_eq!(got, all);
    }

    #[test]
    fn rerank_fallback_prefers_token_overlap() {
        let merged = MergedQuery {
            text: "volkswagen beetle production year".into(),
            cheat: false,
        };
        let chunks = vec![
            chunk("disjoint", "pasta recipe with tomatoes", &[1.0]),
            chunk(
                "overlap",
                "volkswagen beetle production year details",
                &[1.0],
            ),
        ];
        let ranked = rerank_chunks(&merged, &chunks, &LexicalReranker, 2).unwrap();
        assert_eq!(ranked[0].id, "overlap");
    }

    #[test]
    fn rerank_with_m_at_least_len_is_a_permutation() {
        let merged = MergedQuery {
            text: "alpha beta".into(),
            cheat: false,
        };
        let chunks = vec![
            chunk("a", "alpha", &[1.0]),
            chunk("b", "beta", &[1.0]),
            chunk("c", "gamma", &[1.0]),
        ];
        let ranked = rerank_chunks(&merged, &chunks, &LexicalReranker, 10).unwrap();
        assert_eq!(ranked.len(), 3);
        let mut ids: Vec<&str> = ranked.iter().map(|c| c.id.as_str()).collect();
        ids.sort_unstable();
        assert_eq!(ids, vec!["a", "b", "c"]);
    }

    #[test]
    fn rerank_equal_scores_preserve_input_order() {
        let merged = MergedQuery {
            text: "zzz".into(),
            cheat: false,
        };
        let chunks = vec![
            chunk("first", "aaa", &[1.0]),
            chunk("second", "bbb", &[1.0]),
            chunk("third", "ccc", &[1.0]),
        ];
        let ranked = rerank_chunks(&merged, &chunks, &LexicalReranker, 3).unwrap();
        let ids: Vec<&str> = ranked.iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, vec!["first", "second", "third"]);
    }

    fn merged(text: &str) -> MergedQuery {
        MergedQuery {
            text: text.into(),
            cheat: false,
        }
    }

    #[test]
    fn preference_pairs_cross_correct_with_incorrect() {
        let query = Query::new("q", "question", ImageRef::opaque("img"));
        let samples = vec![
            (merged("good rewrite"), Verdict::Correct),
            (merged("bad rewrite"), Verdict::Incorrect),
        ];
        let pairs = build_rewrite_preference_pairs(&query, &samples);
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].better.text, "good rewrite");
        assert_eq!(pairs[0].worse.text, "bad rewrite");
    }

    #[test]
    fn preference_pairs_need_both_outcomes() {
        let query = Query::new("q", "question", ImageRef::opaque("img"));
        let samples = vec![
            (merged("a"), Verdict::Correct),
            (merged("b"), Verdict::Correct),
        ];
        assert!(build_rewrite_preference_pairs(&query, &samples).is_empty());
    }

    #[test]
    fn preference_pairs_exclude_missing_and_count_cross_product() {
        let query = Query::new("q", "question", ImageRef::opaque("img"));
        let samples = vec![
            (merged("good"), Verdict::Correct),
            (merged("bad one"), Verdict::Incorrect),
            (merged("bad two"), Verdict::Incorrect),
            (merged("refused"), Verdict::Missing),
        ];
        let pairs = build_rewrite_preference_pairs(&query, &samples);
        // 1 correct x 2 incorrect
        assert_eq!(pairs.len(), 2);
        assert!(pairs.iter().all(|p| p.better.text == "good"));
        assert!(pairs.iter().all(|p| p.better != p.worse));
    }

    #[test]
    fn corpus_round_trips_through_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("web.jsonl");
        let lines = [
            serde_json::json!({"id": "c1", "text": "beetle history", "embedding": [0.1, 0.2], "source_url": "https://example.test/beetle"}),
            serde_json::json!({"id": "c2", "text": "daisy care", "embedding": [0.3, 0.4]}),
        ];
        std::fs::write(
            &path,
            lines.iter().map(|l| format!("{l}\n")).collect::<String>(),
        )
        .unwrap();
        let corpus = WebCorpus::load(&path).unwrap();
        assert_eq!(corpus.len(), 2);
        assert_eq!(
            corpus.chunks()[0].source_url.as_deref(),
            Some("https://example.test/beetle")
        );
        assert_eq!(corpus.chunks()[1].source_url, None);
        assert!(
            WebCorpus::new(vec![corpus.chunks()[0].clone(), corpus.chunks()[0].clone()]).is_err()
        );
    }
}
