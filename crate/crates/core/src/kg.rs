//! Image-indexed knowledge-graph retrieval: image search, grounding,
//! image-based rerank filtering, entity-name matching, and
//! attribute-sentence retrieval.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::Arc;

use crate::gateway::{GatewayError, ModelGateway, ModelRequest};
use crate::prompts::{render, DINO_TEMPLATE, ENTITY_TEMPLATE, IMAGE_RERANK_TEMPLATE};
use crate::rerank::{rank_passages, RerankClient};
use crate::stemming::stem_token_set;
use crate::types::{Domain, EmbeddingVector, ImageRef, Query};
use crate::vector::{cosine_similarity, VectorError};

pub const DEFAULT_POOL_SIZE: usize = 1000;
pub const DEFAULT_TOP_K: usize = 5;
/// How many top image-search candidates enter the image rerank filter.
pub const DEFAULT_RERANK_CANDIDATES: usize = 5;

#[derive(Clone, Debug, thiserror::Error)]
pub enum KgError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Vector(#[from] VectorError),
    #[error("parallel lists differ in length: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("model returned an empty entity name")]
    EmptyName,
    #[error("invalid KG index: {0}")]
    Index(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// One knowledge-graph entity: a representative image embedding plus
/// ordered structured attributes.
#[derive(Clone, Debug, PartialEq)]
pub struct KGEntity {
    pub id: String,
    pub name: String,
    pub image: ImageRef,
    pub image_embedding: EmbeddingVector,
    pub attributes: Vec<(String, String)>,
}

/// Immutable entity store; all embeddings share one dimension.
#[derive(Clone, Debug)]
pub struct ImageIndex {
    entities: Vec<KGEntity>,
    dimension: usize,
}

#[derive(Serialize, Deserialize)]
struct KgIndexRecord {
    id: String,
    name: String,
    image_path: String,
    image_embedding: Vec<f64>,
    attributes: Vec<(String, String)>,
}

impl ImageIndex {
    pub fn new(entities: Vec<KGEntity>) -> Result<Self, KgError> {
        let dimension = entities
            .first()
            .map_or(0, |e| e.image_embedding.dimension());
        let mut seen = HashSet::new();
        for entity in &entities {
            if entity.name.is_empty() {
                return Err(KgError::Index(format!(
                    "entity {} has an empty name",
                    entity.id
                )));
            }
            if !seen.insert(entity.id.clone()) {
                return Err(KgError::Index(format!("duplicate entity id {}", entity.id)));
            }
            if entity.image_embedding.dimension() != dimension {
                return Err(KgError::Index(format!(
                    "entity {} embedding dimension {} != index dimension {dimension}",
                    entity.id,
                    entity.image_embedding.dimension()
                )));
            }
            if !entity.image_embedding.is_finite() {
                return Err(KgError::Index(format!(
                    "entity {} embedding not finite",
                    entity.id
                )));
            }
        }
        Ok(Self {
            entities,
            dimension,
        })
    }

    /// Load from JSONL: one object per line with fields
    /// `id`, `name`, `image_path`, `image_embedding`, `attributes`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, KgError> {
        let file = File::open(path.as_ref())
            .map_err(|e| KgError::Index(format!("{}: {e}", path.as_ref().display())))?;
        let mut entities = Vec::new();
        for (line_no, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| KgError::Index(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: KgIndexRecord = serde_json::from_str(&line)
                .map_err(|e| KgError::Index(format!("line {}: {e}", line_no + 1)))?;
            entities.push(KGEntity {
                image: ImageRef::new(record.id.clone(), record.image_path),
                id: record.id,
                name: record.name,
                image_embedding: EmbeddingVector::new(record.image_embedding),
                attributes: record.attributes,
            });
        }
        Self::new(entities)
    }

    pub fn entities(&self) -> &[KGEntity] {
        &self.entities
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }
}

/// Region localized in the query image plus the crop's embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundedRegion {
    pub phrase: String,
    /// (x0, y0, x1, y1), normalized to [0, 1], x0 < x1 and y0 < y1.
    pub bbox: (f64, f64, f64, f64),
    pub crop_embedding: EmbeddingVector,
}

impl GroundedRegion {
    pub fn new(
        phrase: impl Into<String>,
        bbox: (f64, f64, f64, f64),
        crop_embedding: EmbeddingVector,
    ) -> Result<Self, KgError> {
        let (x0, y0, x1, y1) = bbox;
        if !(x0 < x1 && y0 < y1) {
            return Err(KgError::InvalidParams(format!("degenerate box {bbox:?}")));
        }
        Ok(Self {
            phrase: phrase.into(),
            bbox,
            crop_embedding,
        })
    }
}

/// Relevance label produced for rerank-classifier distillation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RerankLabel {
    pub query_id: String,
    pub entity_id: String,
    pub relevant: bool,
}

/// External grounding service contract: region detection plus image
/// embeddings (the index and the query images share one embedding space).
pub trait GroundingClient: Send + Sync {
    /// Localize the phrase; `None` means the detector found nothing.
    fn ground(
        &self,
        image: &ImageRef,
        phrase: &str,
    ) -> Result<Option<GroundedRegion>, GatewayError>;

    /// Whole-image embedding, used when detection fails.
    fn embed_image(&self, image: &ImageRef) -> Result<EmbeddingVector, GatewayError>;
}

/// Fixture grounding client keyed by image id.
#[derive(Default)]
pub struct FixtureGrounder {
    regions: std::collections::HashMap<String, GroundedRegion>,
    whole_image: std::collections::HashMap<String, EmbeddingVector>,
}

#[derive(Serialize, Deserialize)]
struct GrounderRecord {
    image_id: String,
    #[serde(default)]
    bbox: Option<[f64; 4]>,
    #[serde(default)]
    crop_embedding: Option<Vec<f64>>,
    #[serde(default)]
    phrase: Option<String>,
    image_embedding: Vec<f64>,
}

impl FixtureGrounder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_region(mut self, image_id: impl Into<String>, region: GroundedRegion) -> Self {
        self.regions.insert(image_id.into(), region);
        self
    }

    pub fn with_whole_image(
        mut self,
        image_id: impl Into<String>,
        embedding: EmbeddingVector,
    ) -> Self {
        self.whole_image.insert(image_id.into(), embedding);
        self
    }

    /// Load from JSONL: `{image_id, bbox?, crop_embedding?, phrase?,
    /// image_embedding}`; records without a box ground to nothing.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, KgError> {
        let file = File::open(path.as_ref())
            .map_err(|e| KgError::Index(format!("{}: {e}", path.as_ref().display())))?;
        let mut grounder = Self::new();
        for (line_no, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| KgError::Index(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: GrounderRecord = serde_json::from_str(&line)
                .map_err(|e| KgError::Index(format!("line {}: {e}", line_no + 1)))?;
            if let (Some(bbox), Some(crop)) = (record.bbox, record.crop_embedding) {
                let region = GroundedRegion::new(
                    record.phrase.unwrap_or_default(),
                    (bbox[0], bbox[1], bbox[2], bbox[3]),
                    EmbeddingVector::new(crop),
                )?;
                grounder.regions.insert(record.image_id.clone(), region);
            }
            grounder.whole_image.insert(
                record.image_id,
                EmbeddingVector::new(record.image_embedding),
            );
        }
        Ok(grounder)
    }
}

impl GroundingClient for FixtureGrounder {
    fn ground(
        &self,
        image: &ImageRef,
        phrase: &str,
    ) -> Result<Option<GroundedRegion>, GatewayError> {
        Ok(self.regions.get(&image.id).cloned().map(|mut region| {
            if region.phrase.is_empty() {
                region.phrase = phrase.to_string();
            }
            region
        }))
    }

    fn embed_image(&self, image: &ImageRef) -> Result<EmbeddingVector, GatewayError> {
        self.whole_image
            .get(&image.id)
            .cloned()
            .ok_or_else(|| GatewayError::BackendUnavailable {
                reason: format!("no fixture embedding for image {}", image.id),
            })
    }
}

/// Candidate ordering for the top-k heap: the heap's maximum is the worst
/// kept candidate (lowest similarity, then highest id).
struct HeapEntry<'a> {
    similarity: f64,
    entity: &'a KGEntity,
}

impl PartialEq for HeapEntry<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapEntry<'_> {}
impl PartialOrd for HeapEntry<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .similarity
            .total_cmp(&self.similarity)
            .then_with(|| self.entity.id.cmp(&other.entity.id))
    }
}

/// Top-k entities by cosine similarity, ties broken by entity id ascending.
///
/// Uses a bounded heap rather than a full sort; the brute-force full scan
/// is kept as the independent test oracle.
pub fn index_search<'a>(
    index: &'a ImageIndex,
    query_embedding: &EmbeddingVector,
    k: usize,
) -> Result<Vec<(&'a KGEntity, f64)>, KgError> {
    if k == 0 {
        return Err(KgError::InvalidParams("k must be at least 1".into()));
    }
    if index.is_empty() {
        return Ok(Vec::new());
    }
    let mut heap: BinaryHeap<HeapEntry<'_>> = BinaryHeap::with_capacity(k + 1);
    for entity in index.entities() {
        let similarity = cosine_similarity(query_embedding, &entity.image_embedding)?;
        heap.push(HeapEntry { similarity, entity });
        if heap.len() > k {
            heap.pop();
        }
    }
    let mut results: Vec<(&KGEntity, f64)> =
        heap.into_iter().map(|e| (e.entity, e.similarity)).collect();
    results.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.id.cmp(&b.0.id)));
    Ok(results)
}

/// Per-domain grounding phrases used instead of a model call.
pub fn domain_phrase(domain: Domain) -> &'static str {
    match domain {
        Domain::Vehicle => "Car",
        Domain::Plant => "Plant",
        Domain::Local => "Building",
        Domain::Food => "Food",
        Domain::Animal => "Animal",
        Domain::Math | Domain::Science | Domain::Other => "Object",
    }
}

/// How the grounding phrase is produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhraseMode {
    /// Prompt the model with the detector-phrase prompt.
    Model,
    /// Use the fixed per-domain phrase table.
    DomainTable,
}

/// Produce the short phrase handed to the grounding detector. Model
/// responses are truncated to at most 8 words.
pub fn generate_grounding_phrase(
    gateway: &Arc<ModelGateway>,
    model_id: &str,
    query: &Query,
    mode: PhraseMode,
) -> Result<String, GatewayError> {
    if mode == PhraseMode::DomainTable {
        return Ok(domain_phrase(query.domain.unwrap_or(Domain::Other)).to_string());
    }
    let prompt = render(
        DINO_TEMPLATE,
        &[
            ("image", query.image.id.as_str()),
            ("query", query.text.as_str()),
        ],
    );
    let request = ModelRequest::text(model_id, prompt).with_images(vec![query.image.clone()]);
    let response = gateway.complete(&request)?;
    let words: Vec<&str> = response.text.split_whitespace().take(8).collect();
    Ok(words.join(" "))
}

/// Ground the query image; a client that detects nothing yields the
/// identity region (the whole image) with the whole-image embedding.
pub fn ground(
    client: &dyn GroundingClient,
    query: &Query,
    phrase: &str,
) -> Result<GroundedRegion, GatewayError> {
    match client.ground(&query.image, phrase)? {
        Some(region) => Ok(region),
        None => Ok(GroundedRegion {
            phrase: phrase.to_string(),
            bbox: (0.0, 0.0, 1.0, 1.0),
            crop_embedding: client.embed_image(&query.image)?,
        }),
    }
}

/// Keep only candidates the two-image judge accepts (responses starting
/// with "yes", case-insensitively); order is preserved, unparseable
/// responses count as "No".
pub fn rerank_by_image(
    gateway: &Arc<ModelGateway>,
    model_id: &str,
    query: &Query,
    candidates: &[KGEntity],
) -> Result<Vec<KGEntity>, GatewayError> {
    let mut kept = Vec::new();
    for entity in candidates {
        let prompt = render(
            IMAGE_RERANK_TEMPLATE,
            &[
                ("query_image", query.image.id.as_str()),
                ("index_image", entity.image.id.as_str()),
                ("query", query.text.as_str()),
                ("description", entity.name.as_str()),
            ],
        );
        let request = ModelRequest::text(model_id, prompt)
            .with_images(vec![query.image.clone(), entity.image.clone()]);
        let response = gateway.complete(&request)?;
        if response.text.trim_start().to_lowercase().starts_with("yes") {
            kept.push(entity.clone());
        }
    }
    Ok(kept)
}

/// Distillation labels: a candidate is relevant iff retrieving it let the
/// base model answer correctly AND the strong judge called it the same
/// entity.
pub fn label_rerank_candidates(
    query: &Query,
    candidates: &[KGEntity],
    qa_correct: &[bool],
    judge_same_entity: &[bool],
) -> Result<Vec<RerankLabel>, KgError> {
    for other in [qa_correct.len(), judge_same_entity.len()] {
        if other != candidates.len() {
            return Err(KgError::LengthMismatch {
                left: candidates.len(),
                right: other,
            });
        }
    }
    Ok(candidates
        .iter()
        .zip(qa_correct.iter().zip(judge_same_entity))
        .map(|(entity, (qa, judge))| RerankLabel {
            query_id: query.id.clone(),
            entity_id: entity.id.clone(),
            relevant: *qa && *judge,
        })
        .collect())
}

/// Extract the entity name the query is about; the first non-empty response
/// line wins.
pub fn extract_entity_name(
    gateway: &Arc<ModelGateway>,
    model_id: &str,
    query: &Query,
) -> Result<String, KgError> {
    let prompt = render(ENTITY_TEMPLATE, &[("query", query.text.as_str())]);
    let request = ModelRequest::text(model_id, prompt).with_images(vec![query.image.clone()]);
    let response = gateway.complete(&request)?;
    response
        .text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .map(str::to_string)
        .ok_or(KgError::EmptyName)
}

/// Stemmed-token-set entity matching: true iff the sets are identical or
/// one contains the other. Empty sets match nothing.
pub fn match_entity_names(a: &str, b: &str) -> bool {
    let sa = stem_token_set(a);
    let sb = stem_token_set(b);
    if sa.is_empty() || sb.is_empty() {
        return false;
    }
    sa.is_subset(&sb) || sb.is_subset(&sa)
}

/// One sentence per attribute: "The {attribute} of {name} is {value}."
pub fn flatten_attributes(entity: &KGEntity) -> Vec<String> {
    entity
        .attributes
        .iter()
        .map(|(attribute, value)| format!("The {attribute} of {} is {value}.", entity.name))
        .collect()
}

/// Entity-chunk retrieval: image-search a large pool, flatten every
/// attribute into a sentence, rerank the sentences against the merged
/// query, and return the top k.
///
/// `query_embedding` is the grounded crop embedding when grounding
/// succeeded, otherwise the whole-image embedding; `None` (no grounding
/// client configured at all) falls back to the index order for the pool.
pub fn retrieve_entity_chunks(
    index: &ImageIndex,
    query_embedding: Option<&EmbeddingVector>,
    merged_query: &str,
    reranker: &dyn RerankClient,
    pool_size: usize,
    k: usize,
) -> Result<Vec<String>, KgError> {
    if !(pool_size >= k && k >= 1) {
        return Err(KgError::InvalidParams(format!(
            "need pool_size >= k >= 1, got pool_size={pool_size} k={k}"
        )));
    }
    if index.is_empty() {
        return Ok(Vec::new());
    }
    let pool: Vec<&KGEntity> = match query_embedding {
        Some(embedding) => index_search(index, embedding, pool_size)?
            .into_iter()
            .map(|(e, _)| e)
            .collect(),
        None => index.entities().iter().take(pool_size).collect(),
    };

    let sentences: Vec<String> = pool.iter().flat_map(|e| flatten_attributes(e)).collect();
    if sentences.is_empty() {
        return Ok(Vec::new());
    }
    let refs: Vec<&str> = sentences.iter().map(String::as_str).collect();
    let ranked = rank_passages(reranker, merged_query, &refs)?;
    Ok(ranked
        .into_iter()
        .take(k)
        .map(|i| sentences[i].clone())
        .collect())
}
