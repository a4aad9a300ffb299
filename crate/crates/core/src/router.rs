//! Domain classification and pipeline routing.
//!
//! Each query is classified into one of the eight domains, then routed:
//! math goes to the math tool, plant to the entity-chunks pipeline, and
//! everything else to the web-chunks pipeline (the default table, which a
//! config file can override).

use std::collections::BTreeMap;
use std::str::FromStr;
use std::sync::Arc;

use crate::gateway::{GatewayError, ModelGateway, ModelRequest};
use crate::prompts::{render, CLASSIFY_TEMPLATE};
use crate::types::{Domain, Query};

/// The three executable pipelines.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PipelineId {
    MathTool,
    EntityChunks,
    WebChunks,
}

impl PipelineId {
    pub fn as_str(&self) -> &'static str {
        match self {
            PipelineId::MathTool => "math_tool",
            PipelineId::EntityChunks => "entity_chunks",
            PipelineId::WebChunks => "web_chunks",
        }
    }
}

impl FromStr for PipelineId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "math_tool" => Ok(PipelineId::MathTool),
            "entity_chunks" => Ok(PipelineId::EntityChunks),
            "web_chunks" => Ok(PipelineId::WebChunks),
            other => Err(format!("unknown pipeline: {other:?}")),
        }
    }
}

/// Total mapping from domain to pipeline.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoutingTable {
    table: BTreeMap<Domain, PipelineId>,
}

impl Default for RoutingTable {
    fn default() -> Self {
        let mut table = BTreeMap::new();
        for domain in Domain::ALL {
            let pipeline = match domain {
                Domain::Math => PipelineId::MathTool,
                Domain::Plant => PipelineId::EntityChunks,
                _ => PipelineId::WebChunks,
            };
            table.insert(domain, pipeline);
        }
        Self { table }
    }
}

impl RoutingTable {
    pub fn set(&mut self, domain: Domain, pipeline: PipelineId) {
        self.table.insert(domain, pipeline);
    }

    /// Apply `domain=pipeline` override lines on top of the default table.
    pub fn with_overrides(lines: &[(String, String)]) -> Result<Self, String> {
        let mut table = Self::default();
        for (domain, pipeline) in lines {
            let domain: Domain = domain.parse().map_err(|e| format!("{e}"))?;
            let pipeline: PipelineId = pipeline.parse()?;
            table.set(domain, pipeline);
        }
        Ok(table)
    }
}

/// Pure table lookup; total over all eight domains by construction.
pub fn route(domain: Domain, table: &RoutingTable) -> PipelineId {
    *table.table.get(&domain).expect("routing table is total")
}

/// Parse a model classification response: exact label match first, then a
/// fuzzy scan for any label appearing as a substring.
pub fn parse_domain_response(response: &str) -> Option<Domain> {
    if let Ok(domain) = response.parse::<Domain>() {
        return Some(domain);
    }
    let lower = response.to_lowercase();
    Domain::ALL
        .iter()
        .copied()
        .find(|d| lower.contains(d.as_str()))
}

/// Keyword rules in priority order; first hit wins.
const DOMAIN_KEYWORDS: &[(Domain, &[&str])] = &[
    (
        Domain::Math,
        &[
            "math",
            "calculate",
            "calculation",
            "compute",
            "convert",
            "simplify",
            "solve",
            "balance",
            "equation",
            "sum",
            "base",
            "binary",
            "octal",
            "decimal",
            "hexadecimal",
            "plus",
            "minus",
            "times",
            "divided",
        ],
    ),
    (
        Domain::Vehicle,
        &[
            "car",
            "cars",
            "vehicle",
            "truck",
            "motorcycle",
            "suv",
            "sedan",
            "van",
            "engine",
            "horsepower",
        ],
    ),
    (
        Domain::Plant,
        &[
            "plant",
            "flower",
            "tree",
            "botanical",
            "leaf",
            "leaves",
            "bloom",
            "blossom",
            "shrub",
            "succulent",
        ],
    ),
    (
        Domain::Animal,
        &[
            "animal", "dog", "cat", "bird", "fish", "breed", "mammal", "insect", "reptile",
        ],
    ),
    (
        Domain::Food,
        &[
            "food",
            "dish",
            "recipe",
            "calorie",
            "calories",
            "cuisine",
            "ingredient",
            "snack",
            "drink",
            "fruit",
            "vegetable",
        ],
    ),
    (
        Domain::Science,
        &[
            "science",
            "chemical",
            "chemistry",
            "physics",
            "element",
            "molecule",
            "planet",
            "star",
            "mineral",
        ],
    ),
    (
        Domain::Local,
        &[
            "restaurant",
            "store",
            "shop",
            "street",
            "building",
            "museum",
            "park",
            "city",
            "hours",
            "address",
        ],
    ),
];

/// True when a digit sits adjacent (ignoring spaces) to an arithmetic
/// operator, e.g. "2+2" or "2 + 2".
fn looks_like_arithmetic(text: &str) -> bool {
    let compact: Vec<char> = text.chars().filter(|c| !c.is_whitespace()).collect();
    compact.windows(2).any(|w| {
        let op = |c: char| matches!(c, '+' | '-' | '*' | '/' | '^' | '=');
        (w[0].is_ascii_digit() && op(w[1])) || (op(w[0]) && w[1].is_ascii_digit())
    }) || text.contains("->")
}

/// Keyword fallback over the question text; never fails.
pub fn keyword_domain(question: &str) -> Domain {
    if looks_like_arithmetic(question) {
        return Domain::Math;
    }
    let tokens: Vec<String> = question
        .to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect();
    for (domain, keywords) in DOMAIN_KEYWORDS {
        if tokens.iter().any(|t| keywords.contains(&t.as_str())) {
            return *domain;
        }
    }
    Domain::Other
}

/// Classify a query by prompting the model, falling back to keyword rules
/// (and finally to `other`) when the response is unparseable.
pub fn classify_domain(
    gateway: &Arc<ModelGateway>,
    model_id: &str,
    query: &Query,
) -> Result<Domain, GatewayError> {
    let prompt = render(
        CLASSIFY_TEMPLATE,
        &[
            ("image", query.image.id.as_str()),
            ("query", query.text.as_str()),
        ],
    );
    let request = ModelRequest::text(model_id, prompt).with_images(vec![query.image.clone()]);
    let response = gateway.complete(&request)?;
    Ok(parse_domain_response(&response.text).unwrap_or_else(|| keyword_domain(&query.text)))
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum RouterError {
    #[error("cannot build a confusion matrix from zero pairs")]
    EmptyInput,
}

/// 8x8 confusion grid: rows are true domains, columns predicted ones.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: [[u64; 8]; 8],
    total: u64,
}

impl ConfusionMatrix {
    pub fn cell(&self, truth: Domain, predicted: Domain) -> u64 {
        self.counts[truth.index()][predicted.index()]
    }

    pub fn row_sum(&self, truth: Domain) -> u64 {
        self.counts[truth.index()].iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// trace / total.
    pub fn accuracy(&self) -> f64 {
        let trace: u64 = (0..8).map(|i| self.counts[i][i]).sum();
        trace as f64 / self.total as f64
    }
}

/// Accumulate (true, predicted) pairs into a confusion matrix.
pub fn confusion_matrix(pairs: &[(Domain, Domain)]) -> Result<ConfusionMatrix, RouterError> {
    if pairs.is_empty() {
        return Err(RouterError::EmptyInput);
    }
    let mut counts = [[0u64; 8]; 8];
    for (truth, predicted) in pairs {
        counts[truth.index()][predicted.index()] += 1;
    }
    Ok(ConfusionMatrix {
        counts,
        total: pairs.len() as u64,
    })
}
