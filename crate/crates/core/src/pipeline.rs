//! End-to-end query answering per the routing design: classify, route,
//! retrieve, generate, and score.
//!
//! Component failures degrade to a refusal and a logged warning, never a
//! crash: under the +1/0/-1 metric an abstention is free, a wrong answer
//! is not.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use crate::config::{
    BackendMode, JudgeModeConfig, ModelIds, PhraseModeConfig, RunConfig, ToolMode,
};
use crate::dataset::{record_to_query, Dataset};
use crate::eval::{score_report, Judge, ScoreReport};
use crate::gateway::{
    CallCounts, FixtureBackend, FixtureEmbedder, GatewayError, LiveBackend, LiveEmbedder,
    ModelGateway, ModelRequest,
};
use crate::kg::{
    domain_phrase, generate_grounding_phrase, ground, retrieve_entity_chunks, FixtureGrounder,
    GroundingClient, ImageIndex, KgError, PhraseMode,
};
use crate::math::{dispatch_rule_mode, execute_tool, parse_tool_call, MathError};
use crate::prompts::{render, ANSWER_TEMPLATE, TOOL_CALL_TEMPLATE};
use crate::rerank::{LexicalReranker, RerankClient};
use crate::router::{classify_domain, keyword_domain, route, PipelineId, RoutingTable};
use crate::types::{Answer, ConversationTurn, Domain, EmbeddingVector, Query, Verdict};
use crate::web::{
    rerank_chunks, rewrite_query, rewrite_query_with_context, search_chunks, MergedQuery, WebChunk,
    WebCorpus, WebError,
};

#[derive(Clone, Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Web(#[from] WebError),
    #[error("routing: {0}")]
    Routing(String),
    #[error("dataset: {0}")]
    Dataset(#[from] crate::dataset::DatasetError),
}

/// Everything known about one answered query.
#[derive(Clone, Debug)]
pub struct AnswerOutcome {
    pub query_id: String,
    pub domain: Domain,
    pub pipeline: PipelineId,
    pub answer: Answer,
    pub warnings: Vec<String>,
}

/// One results-file line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultLine {
    pub query_id: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
}

/// One errors-file line for a quarantined record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuarantineLine {
    pub query_id: String,
    pub error: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    pub completions: u64,
    pub embeds: u64,
    pub backend_calls: u64,
    pub grounding_calls: u64,
    pub answered: u64,
    pub quarantined: u64,
    pub warning_count: u64,
}

#[derive(Clone, Debug)]
pub struct BatchOutcome {
    pub results: Vec<ResultLine>,
    pub quarantined: Vec<QuarantineLine>,
    /// (query_id, warning) pairs in record order.
    pub warnings: Vec<(String, String)>,
    pub report: Option<ScoreReport>,
    pub stats: RunStats,
}

struct PipelineParams {
    pool_size: usize,
    top_k: usize,
    search_k: usize,
    rerank_m: usize,
    tool_mode: ToolMode,
    phrase_mode: PhraseMode,
    workers: usize,
    timeout_per_query: Option<Duration>,
}

pub struct Pipeline {
    gateway: Arc<ModelGateway>,
    models: ModelIds,
    routing: RoutingTable,
    kg_index: Option<ImageIndex>,
    web_corpus: Option<WebCorpus>,
    grounder: Option<Arc<dyn GroundingClient>>,
    reranker: Arc<dyn RerankClient>,
    judge: Judge,
    params: PipelineParams,
    grounding_calls: AtomicU64,
}

/// Build the gateway a config describes (fixture or live).
pub fn build_gateway(config: &RunConfig) -> Result<Arc<ModelGateway>, PipelineError> {
    config.validate()?;
    let gateway = match config.mode {
        BackendMode::Fixture => {
            let backend = FixtureBackend::from_files(&config.fixture_paths)?
                .with_echo_fallback(config.echo_fallback);
            ModelGateway::new(
                Arc::new(backend),
                Arc::new(FixtureEmbedder::new(config.embed_dimension)),
            )
        }
        BackendMode::Live => {
            let endpoint = config.endpoint.clone().expect("validated");
            let backend = LiveBackend::new(endpoint.clone())
                .with_token(config.token.clone())
                .with_timeout(Duration::from_secs(config.timeout_secs));
            let embedder = LiveEmbedder::new(endpoint, config.embed_dimension)
                .with_token(config.token.clone());
            ModelGateway::new(Arc::new(backend), Arc::new(embedder))
        }
    };
    let gateway = gateway.with_max_in_flight(config.workers);
    let gateway = match &config.cache_path {
        Some(path) => gateway.with_cache_file(path)?,
        None => gateway,
    };
    Ok(Arc::new(gateway))
}

impl Pipeline {
    pub fn from_config(config: &RunConfig) -> Result<Self, PipelineError> {
        let gateway = build_gateway(config)?;
        Self::with_gateway(config, gateway)
    }

    /// Build everything but the gateway from the config; lets tests inject
    /// scripted backends.
    pub fn with_gateway(
        config: &RunConfig,
        gateway: Arc<ModelGateway>,
    ) -> Result<Self, PipelineError> {
        let routing = RoutingTable::with_overrides(&config.routing_overrides)
            .map_err(PipelineError::Routing)?;
        let kg_index = config.kg_index.as_ref().map(ImageIndex::load).transpose()?;
        let web_corpus = config
            .web_corpus
            .as_ref()
            .map(WebCorpus::load)
            .transpose()?;
        let grounder: Option<Arc<dyn GroundingClient>> = config
            .grounding_fixtures
            .as_ref()
            .map(FixtureGrounder::load)
            .transpose()?
            .map(|g| Arc::new(g) as Arc<dyn GroundingClient>);
        let judge = match config.judge_mode {
            JudgeModeConfig::Exact => Judge::exact(),
            JudgeModeConfig::Llm => Judge::llm(Arc::clone(&gateway), config.models.judge.clone()),
        };
        Ok(Self {
            gateway,
            models: config.models.clone(),
            routing,
            kg_index,
            web_corpus,
            grounder,
            reranker: Arc::new(LexicalReranker),
            judge,
            params: PipelineParams {
                pool_size: config.pool_size,
                top_k: config.top_k,
                search_k: config.search_k,
                rerank_m: config.rerank_m,
                tool_mode: config.tool_mode,
                phrase_mode: match config.phrase_mode {
                    PhraseModeConfig::Model => PhraseMode::Model,
                    PhraseModeConfig::DomainTable => PhraseMode::DomainTable,
                },
                workers: config.workers.max(1),
                timeout_per_query: config.timeout_per_query_secs.map(Duration::from_secs),
            },
            grounding_calls: AtomicU64::new(0),
        })
    }

    /// Swap the grounding client (fault-injection tests use this).
    pub fn with_grounder(mut self, grounder: Option<Arc<dyn GroundingClient>>) -> Self {
        self.grounder = grounder;
        self
    }

    pub fn gateway(&self) -> &Arc<ModelGateway> {
        &self.gateway
    }

    pub fn judge(&self) -> &Judge {
        &self.judge
    }

    fn stats_snapshot(&self) -> (CallCounts, u64) {
        (
            self.gateway.call_counts(),
            self.grounding_calls.load(Ordering::Relaxed),
        )
    }

    /// Resolve a query's domain: a dataset tag is trusted when present,
    /// otherwise the classifier runs, falling back to keyword rules on
    /// backend failure. Never fails.
    pub fn classify(&self, query: &Query, warnings: &mut Vec<String>) -> Domain {
        match query.domain {
            Some(domain) => domain,
            None => match classify_domain(&self.gateway, &self.models.classifier, query) {
                Ok(domain) => domain,
                Err(e) => {
                    warnings.push(format!("classification failed ({e}); keyword fallback"));
                    keyword_domain(&query.text)
                }
            },
        }
    }

    /// Answer one query. Every component failure downgrades to a refusal.
    pub fn answer_query(&self, query: &Query) -> AnswerOutcome {
        let mut warnings = Vec::new();
        let domain = self.classify(query, &mut warnings);
        let pipeline = route(domain, &self.routing);
        let answer = match pipeline {
            PipelineId::MathTool => self.math_answer(query, &mut warnings),
            PipelineId::EntityChunks => self.entity_answer(query, domain, &mut warnings),
            PipelineId::WebChunks => self.web_answer(query, &mut warnings),
        };
        AnswerOutcome {
            query_id: query.id.clone(),
            domain,
            pipeline,
            answer,
            warnings,
        }
    }

    /// `answer_query` with a wall-clock bound; on timeout the query refuses
    /// and the in-flight work finishes in the background.
    pub fn answer_query_with_timeout(
        self: &Arc<Self>,
        query: Query,
        timeout: Duration,
    ) -> AnswerOutcome {
        let (tx, rx) = std::sync::mpsc::channel();
        let pipeline = Arc::clone(self);
        let query_id = query.id.clone();
        std::thread::spawn(move || {
            let outcome = pipeline.answer_query(&query);
            let _ = tx.send(outcome);
        });
        match rx.recv_timeout(timeout) {
            Ok(outcome) => outcome,
            Err(_) => AnswerOutcome {
                query_id: query_id.clone(),
                domain: Domain::Other,
                pipeline: PipelineId::WebChunks,
                answer: Answer::refusal(),
                warnings: vec![format!(
                    "query {query_id} timed out after {}s",
                    timeout.as_secs()
                )],
            },
        }
    }

    fn math_answer(&self, query: &Query, warnings: &mut Vec<String>) -> Answer {
        let result: Result<String, MathError> = match self.params.tool_mode {
            ToolMode::Rule => dispatch_rule_mode(&query.text),
            ToolMode::Llm => self.llm_tool_answer(query),
        };
        match result {
            Ok(text) => Answer::from_text(text),
            Err(e) => {
                warnings.push(format!("math tool failed ({e}); refusing"));
                Answer::refusal()
            }
        }
    }

    fn llm_tool_answer(&self, query: &Query) -> Result<String, MathError> {
        let prompt = render(TOOL_CALL_TEMPLATE, &[("query", query.text.as_str())]);
        let request = ModelRequest::text(&self.models.answerer, prompt)
            .with_images(vec![query.image.clone()]);
        let response = self
            .gateway
            .complete(&request)
            .map_err(|e| MathError::Parse {
                offset: 0,
                message: e.to_string(),
            })?;
        let call = parse_tool_call(response.text.trim())?;
        Ok(execute_tool(&call).unwrap_or_else(|_| crate::normalize::REFUSAL_TEXT.to_string()))
    }

    fn rewrite(&self, query: &Query) -> Result<MergedQuery, WebError> {
        if query.history.is_empty() {
            rewrite_query(&self.gateway, &self.models.rewriter, query, false)
        } else {
            rewrite_query_with_context(&self.gateway, &self.models.rewriter, query)
        }
    }

    /// Grounded crop embedding when a grounder is configured and healthy;
    /// `None` otherwise (retrieval then pools in index order).
    fn grounded_embedding(
        &self,
        query: &Query,
        domain: Domain,
        warnings: &mut Vec<String>,
    ) -> Option<EmbeddingVector> {
        let grounder = self.grounder.as_ref()?;
        let phrase = match self.params.phrase_mode {
            PhraseMode::DomainTable => domain_phrase(domain).to_string(),
            PhraseMode::Model => {
                match generate_grounding_phrase(
                    &self.gateway,
                    &self.models.phrase,
                    query,
                    PhraseMode::Model,
                ) {
                    Ok(phrase) => phrase,
                    Err(e) => {
                        warnings.push(format!(
                            "phrase generation failed ({e}); domain-table phrase"
                        ));
                        domain_phrase(domain).to_string()
                    }
                }
            }
        };
        self.grounding_calls.fetch_add(1, Ordering::Relaxed);
        match ground(grounder.as_ref(), query, &phrase) {
            Ok(region) => Some(region.crop_embedding),
            Err(e) => {
                warnings.push(format!("grounding failed ({e}); unguided entity pool"));
                None
            }
        }
    }

    fn entity_answer(&self, query: &Query, domain: Domain, warnings: &mut Vec<String>) -> Answer {
        let Some(index) = &self.kg_index else {
            warnings.push("entity pipeline selected but no KG index configured".to_string());
            return Answer::refusal();
        };
        let merged = match self.rewrite(query) {
            Ok(merged) => merged,
            Err(e) => {
                warnings.push(format!("rewrite failed ({e}); refusing"));
                return Answer::refusal();
            }
        };
        let embedding = self.grounded_embedding(query, domain, warnings);
        let chunks = match retrieve_entity_chunks(
            index,
            embedding.as_ref(),
            &merged.text,
            self.reranker.as_ref(),
            self.params.pool_size.max(self.params.top_k),
            self.params.top_k,
        ) {
            Ok(chunks) => chunks,
            Err(e) => {
                warnings.push(format!("entity retrieval failed ({e}); refusing"));
                return Answer::refusal();
            }
        };
        self.generate_answer(query, &chunks, warnings)
    }

    fn web_answer(&self, query: &Query, warnings: &mut Vec<String>) -> Answer {
        let Some(corpus) = &self.web_corpus else {
            warnings.push("web pipeline selected but no web corpus configured".to_string());
            return Answer::refusal();
        };
        let merged = match self.rewrite(query) {
            Ok(merged) => merged,
            Err(e) => {
                warnings.push(format!("rewrite failed ({e}); refusing"));
                return Answer::refusal();
            }
        };
        let hits = match search_chunks(
            &self.gateway,
            &self.models.embedder,
            corpus,
            &merged,
            self.params.search_k,
        ) {
            Ok(hits) => hits,
            Err(e) => {
                warnings.push(format!("chunk search failed ({e}); refusing"));
                return Answer::refusal();
            }
        };
        let candidates: Vec<WebChunk> = hits.into_iter().map(|(c, _)| c.clone()).collect();
        let reranked = match rerank_chunks(
            &merged,
            &candidates,
            self.reranker.as_ref(),
            self.params.rerank_m,
        ) {
            Ok(reranked) => reranked,
            Err(e) => {
                warnings.push(format!("rerank failed ({e}); unreranked candidates"));
                candidates
            }
        };
        let texts: Vec<String> = reranked.into_iter().map(|c| c.text).collect();
        self.generate_answer(query, &texts, warnings)
    }

    fn generate_answer(
        &self,
        query: &Query,
        context_chunks: &[String],
        warnings: &mut Vec<String>,
    ) -> Answer {
        let context = if context_chunks.is_empty() {
            "(no relevant context retrieved)".to_string()
        } else {
            context_chunks.join("\n")
        };
        let prompt = render(
            ANSWER_TEMPLATE,
            &[
                ("context", context.as_str()),
                ("query", query.text.as_str()),
            ],
        );
        let request = ModelRequest::text(&self.models.answerer, prompt)
            .with_images(vec![query.image.clone()]);
        match self.gateway.complete(&request) {
            Ok(response) => Answer::from_text(response.text.trim()),
            Err(e) => {
                warnings.push(format!("answer generation failed ({e}); refusing"));
                Answer::refusal()
            }
        }
    }

    /// Process a whole dataset: sessions run in parallel under a bounded
    /// worker pool, turns within a session run sequentially so each turn's
    /// history is the session's prior turns and their generated answers.
    /// Results come back in dataset record order.
    pub fn run_batch(self: &Arc<Self>, dataset: &Dataset) -> BatchOutcome {
        let (counts_before, grounding_before) = self.stats_snapshot();
        let sessions = dataset.sessions();
        let record_count = dataset.len();

        #[derive(Clone)]
        #[allow(clippy::large_enum_variant)]
        enum Slot {
            Result {
                line: ResultLine,
                query: Query,
                answer: Answer,
                warnings: Vec<String>,
            },
            Quarantined(QuarantineLine),
        }
        let slots: Mutex<Vec<Option<Slot>>> = Mutex::new(vec![None; record_count]);
        let jobs: Mutex<VecDeque<usize>> = Mutex::new((0..sessions.len()).collect());

        std::thread::scope(|scope| {
            for _ in 0..self.params.workers.min(sessions.len().max(1)) {
                scope.spawn(|| loop {
                    let job = { jobs.lock().expect("job queue").pop_front() };
                    let Some(session_index) = job else { break };
                    let (_, turns) = &sessions[session_index];

                    let mut accumulated: Vec<ConversationTurn> = Vec::new();
                    for (position, record) in turns {
                        let query_id =
                            crate::dataset::query_id(&record.session_id, record.turn_index);
                        if record.question.trim().is_empty() {
                            let slot = Slot::Quarantined(QuarantineLine {
                                query_id,
                                error: "empty question".to_string(),
                            });
                            slots.lock().expect("slots")[*position] = Some(slot);
                            continue;
                        }
                        let history = record
                            .history
                            .clone()
                            .unwrap_or_else(|| accumulated.clone());
                        let mut query = record_to_query(record, history);
                        let outcome = match self.params.timeout_per_query {
                            Some(timeout) => self.answer_query_with_timeout(query.clone(), timeout),
                            None => self.answer_query(&query),
                        };
                        // the report groups by the resolved domain
                        query.domain = Some(outcome.domain);
                        let mut warnings = outcome.warnings.clone();
                        let verdict = if query.ground_truth.is_some() {
                            match self.judge.judge(&query, &outcome.answer) {
                                Ok(verdict) => Some(verdict),
                                Err(e) => {
                                    warnings.push(format!("judging failed ({e})"));
                                    None
                                }
                            }
                        } else {
                            None
                        };
                        accumulated.push(ConversationTurn::new(
                            record.question.clone(),
                            outcome.answer.text.clone(),
                        ));
                        let slot = Slot::Result {
                            line: ResultLine {
                                query_id,
                                answer: outcome.answer.text.clone(),
                                verdict,
                            },
                            query,
                            answer: outcome.answer,
                            warnings,
                        };
                        slots.lock().expect("slots")[*position] = Some(slot);
                    }
                });
            }
        });

        let mut results = Vec::new();
        let mut quarantined = Vec::new();
        let mut warnings_out = Vec::new();
        let mut judged: Vec<(Query, Answer, Verdict)> = Vec::new();
        let mut any_ground_truth = false;
        for slot in slots.into_inner().expect("slots") {
            match slot.expect("every record processed") {
                Slot::Result {
                    line,
                    query,
                    answer,
                    warnings,
                } => {
                    any_ground_truth |= query.ground_truth.is_some();
                    if let Some(verdict) = line.verdict {
                        judged.push((query, answer, verdict));
                    }
                    for warning in warnings {
                        warnings_out.push((line.query_id.clone(), warning));
                    }
                    results.push(line);
                }
                Slot::Quarantined(line) => quarantined.push(line),
            }
        }

        let report = if any_ground_truth || record_count == 0 {
            Some(score_report(&judged))
        } else {
            None
        };
        let (counts_after, grounding_after) = self.stats_snapshot();
        let stats = RunStats {
            completions: counts_after.completions - counts_before.completions,
            embeds: counts_after.embeds - counts_before.embeds,
            backend_calls: counts_after.backend_calls - counts_before.backend_calls,
            grounding_calls: grounding_after - grounding_before,
            answered: results.len() as u64,
            quarantined: quarantined.len() as u64,
            warning_count: warnings_out.len() as u64,
        };
        BatchOutcome {
            results,
            quarantined,
            warnings: warnings_out,
            report,
            stats,
        }
    }
}
