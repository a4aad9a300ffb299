//! Run configuration: plain-text key=value sections with environment
//! overrides.
//!
//! ```text
//! [gateway]
//! mode = fixture
//! fixtures = fixtures/model.jsonl
//! cache = cache/responses.jsonl
//!
//! [routing]
//! plant = entity_chunks
//!
//! [pipeline]
//! pool_size = 1000
//! ```
//!
//! `MG_ENDPOINT` and `MG_TOKEN` override the configured endpoint and auth
//! token.

use std::path::{Path, PathBuf};

use crate::ensemble::DEFAULT_OVERFIT_MARGIN;
use crate::kg::{DEFAULT_POOL_SIZE, DEFAULT_RERANK_CANDIDATES, DEFAULT_TOP_K};
use crate::refusal::{DEFAULT_ANSWERABILITY_SAMPLES, DEFAULT_MIN_CORRECT_RATIO};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("config line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("invalid value for {key}: {value}")]
    Value { key: String, value: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BackendMode {
    Live,
    Fixture,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ToolMode {
    Rule,
    Llm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JudgeModeConfig {
    Exact,
    Llm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhraseModeConfig {
    Model,
    DomainTable,
}

/// Model ids used per role; fixture backends treat these as opaque labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelIds {
    pub classifier: String,
    pub rewriter: String,
    pub answerer: String,
    pub judge: String,
    pub phrase: String,
    pub entity: String,
    pub image_judge: String,
    pub embedder: String,
}

impl Default for ModelIds {
    fn default() -> Self {
        Self {
            classifier: "domain-classifier".into(),
            rewriter: "query-rewriter".into(),
            answerer: "answerer".into(),
            judge: "answer-judge".into(),
            phrase: "phrase-generator".into(),
            entity: "entity-extractor".into(),
            image_judge: "image-judge".into(),
            embedder: "text-embedder".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    // [gateway]
    pub mode: BackendMode,
    pub endpoint: Option<String>,
    pub token: Option<String>,
    pub cache_path: Option<PathBuf>,
    pub fixture_paths: Vec<PathBuf>,
    pub echo_fallback: bool,
    pub workers: usize,
    pub timeout_secs: u64,
    pub embed_dimension: usize,
    // [models]
    pub models: ModelIds,
    // [routing]
    pub routing_overrides: Vec<(String, String)>,
    // [pipeline]
    pub pool_size: usize,
    pub top_k: usize,
    pub search_k: usize,
    pub rerank_m: usize,
    pub rerank_candidates: usize,
    pub tool_mode: ToolMode,
    pub judge_mode: JudgeModeConfig,
    pub phrase_mode: PhraseModeConfig,
    pub max_subset_size: Option<usize>,
    pub overfit_margin: f64,
    pub min_correct_ratio: f64,
    pub answerability_samples: usize,
    pub val_ratio: f64,
    pub seed: u64,
    pub timeout_per_query_secs: Option<u64>,
    // [paths]
    pub kg_index: Option<PathBuf>,
    pub web_corpus: Option<PathBuf>,
    pub grounding_fixtures: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: BackendMode::Fixture,
            endpoint: None,
            token: None,
            cache_path: None,
            fixture_paths: Vec::new(),
            echo_fallback: false,
            workers: 8,
            timeout_secs: 60,
            embed_dimension: 32,
            models: ModelIds::default(),
            routing_overrides: Vec::new(),
            pool_size: DEFAULT_POOL_SIZE,
            top_k: DEFAULT_TOP_K,
            search_k: 20,
            rerank_m: 5,
            rerank_candidates: DEFAULT_RERANK_CANDIDATES,
            tool_mode: ToolMode::Rule,
            judge_mode: JudgeModeConfig::Exact,
            phrase_mode: PhraseModeConfig::Model,
            max_subset_size: None,
            overfit_margin: DEFAULT_OVERFIT_MARGIN,
            min_correct_ratio: DEFAULT_MIN_CORRECT_RATIO,
            answerability_samples: DEFAULT_ANSWERABILITY_SAMPLES,
            val_ratio: 0.2,
            seed: 0,
            timeout_per_query_secs: None,
            kg_index: None,
            web_corpus: None,
            grounding_fixtures: None,
        }
    }
}

impl RunConfig {
    /// Parse a config file, then apply environment overrides and validate.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| ConfigError::Io {
            path: path.as_ref().display().to_string(),
            reason: e.to_string(),
        })?;
        let mut config = Self::parse(&text)?;
        config.apply_env();
        config.validate()?;
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut config = Self::default();
        let mut section = String::new();
        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax {
                line: line_no + 1,
                message: format!("expected key=value, got {line:?}"),
            })?;
            let key = key.trim();
            let value = value.trim();
            config.apply(&section, key, value).map_err(|e| match e {
                ConfigError::Value { .. } => e,
                other => other,
            })?;
        }
        Ok(config)
    }

    fn apply(&mut self, section: &str, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = || ConfigError::Value {
            key: key.to_string(),
            value: value.to_string(),
        };
        match (section, key) {
            ("gateway", "mode") => {
                self.mode = match value {
                    "live" => BackendMode::Live,
                    "fixture" => BackendMode::Fixture,
                    _ => return Err(bad()),
                }
            }
            ("gateway", "endpoint") => self.endpoint = Some(value.to_string()),
            ("gateway", "token") => self.token = Some(value.to_string()),
            ("gateway", "cache") => self.cache_path = Some(PathBuf::from(value)),
            ("gateway", "fixtures") => {
                self.fixture_paths = value.split(',').map(|p| PathBuf::from(p.trim())).collect()
            }
            ("gateway", "echo_fallback") => {
                self.echo_fallback = value.parse().map_err(|_| bad())?
            }
            ("gateway", "workers") => self.workers = value.parse().map_err(|_| bad())?,
            ("gateway", "timeout_secs") => self.timeout_secs = value.parse().map_err(|_| bad())?,
            ("gateway", "embed_dimension") => {
                self.embed_dimension = value.parse().map_err(|_| bad())?
            }
            ("models", "classifier") => self.models.classifier = value.to_string(),
            ("models", "rewriter") => self.models.rewriter = value.to_string(),
            ("models", "answerer") => self.models.answerer = value.to_string(),
            ("models", "judge") => self.models.judge = value.to_string(),
            ("models", "phrase") => self.models.phrase = value.to_string(),
            ("models", "entity") => self.models.entity = value.to_string(),
            ("models", "image_judge") => self.models.image_judge = value.to_string(),
            ("models", "embedder") => self.models.embedder = value.to_string(),
            ("routing", domain) => self
                .routing_overrides
                .push((domain.to_string(), value.to_string())),
            ("pipeline", "pool_size") => self.pool_size = value.parse().map_err(|_| bad())?,
            ("pipeline", "top_k") => self.top_k = value.parse().map_err(|_| bad())?,
            ("pipeline", "search_k") => self.search_k = value.parse().map_err(|_| bad())?,
            ("pipeline", "rerank_m") => self.rerank_m = value.parse().map_err(|_| bad())?,
            ("pipeline", "rerank_candidates") => {
                self.rerank_candidates = value.parse().map_err(|_| bad())?
            }
            ("pipeline", "tool_mode") => {
                self.tool_mode = match value {
                    "rule" => ToolMode::Rule,
                    "llm" => ToolMode::Llm,
                    _ => return Err(bad()),
                }
            }
            ("pipeline", "judge_mode") => {
                self.judge_mode = match value {
                    "exact" => JudgeModeConfig::Exact,
                    "llm" => JudgeModeConfig::Llm,
                    _ => return Err(bad()),
                }
            }
            ("pipeline", "phrase_mode") => {
                self.phrase_mode = match value {
                    "model" => PhraseModeConfig::Model,
                    "domain_table" => PhraseModeConfig::DomainTable,
                    _ => return Err(bad()),
                }
            }
            ("pipeline", "max_subset_size") => {
                self.max_subset_size = Some(value.parse().map_err(|_| bad())?)
            }
            ("pipeline", "overfit_margin") => {
                self.overfit_margin = value.parse().map_err(|_| bad())?
            }
            ("pipeline", "min_correct_ratio") => {
                self.min_correct_ratio = value.parse().map_err(|_| bad())?
            }
            ("pipeline", "answerability_samples") => {
                self.answerability_samples = value.parse().map_err(|_| bad())?
            }
            ("pipeline", "val_ratio") => self.val_ratio = value.parse().map_err(|_| bad())?,
            ("pipeline", "seed") => self.seed = value.parse().map_err(|_| bad())?,
            ("pipeline", "timeout_per_query_secs") => {
                self.timeout_per_query_secs = Some(value.parse().map_err(|_| bad())?)
            }
            ("paths", "kg_index") => self.kg_index = Some(PathBuf::from(value)),
            ("paths", "web_corpus") => self.web_corpus = Some(PathBuf::from(value)),
            ("paths", "grounding_fixtures") => self.grounding_fixtures = Some(PathBuf::from(value)),
            _ => {
                return Err(ConfigError::Invalid(format!(
                    "unknown key {key:?} in section {section:?}"
                )))
            }
        }
        Ok(())
    }

    /// `MG_ENDPOINT` and `MG_TOKEN` override file values.
    pub fn apply_env(&mut self) {
        if let Ok(endpoint) = std::env::var("MG_ENDPOINT") {
            if !endpoint.is_empty() {
                self.endpoint = Some(endpoint);
            }
        }
        if let Ok(token) = std::env::var("MG_TOKEN") {
            if !token.is_empty() {
                self.token = Some(token);
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match self.mode {
            BackendMode::Live => {
                if self.endpoint.is_none() {
                    return Err(ConfigError::Invalid(
                        "live mode requires an endpoint (config or MG_ENDPOINT)".into(),
                    ));
                }
            }
            BackendMode::Fixture => {
                if self.fixture_paths.is_empty() && !self.echo_fallback {
                    return Err(ConfigError::Invalid(
                        "fixture mode requires fixture paths (or echo_fallback = true)".into(),
                    ));
                }
            }
        }
        if self.workers == 0 {
            return Err(ConfigError::Invalid("workers must be at least 1".into()));
        }
        if !(self.val_ratio > 0.0 && self.val_ratio < 1.0) {
            return Err(ConfigError::Invalid("val_ratio must be in (0, 1)".into()));
        }
        Ok(())
    }
}
