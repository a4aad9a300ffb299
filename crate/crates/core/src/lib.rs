//! Domain-routed multimodal retrieval engine with deterministic math tools,
//! refusal-training data generation, and checkpoint-ensemble selection.
//!
//! Every model dependency goes through [`gateway::ModelGateway`], which can
//! be backed by a live HTTP endpoint or by deterministic fixtures, so the
//! whole engine is testable offline.

pub mod config;
pub mod dataset;
pub mod ensemble;
pub mod eval;
pub mod fixturegen;
pub mod gateway;
pub mod kg;
pub mod math;
pub mod normalize;
pub mod pipeline;
pub mod prompts;
pub mod refusal;
pub mod rerank;
pub mod rng;
pub mod router;
pub mod stemming;
pub mod types;
pub mod vector;
pub mod web;

pub use normalize::{is_refusal, normalize_answer, REFUSAL_TEXT};
pub use types::{
    Answer, AnswerKind, ConversationTurn, Domain, EmbeddingVector, ImageRef, Query, Verdict,
};
pub use vector::cosine_similarity;
