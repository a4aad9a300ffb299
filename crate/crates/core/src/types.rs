//! Shared domain types used by every pipeline.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::normalize::is_refusal;

/// The eight query domains the router distinguishes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Vehicle,
    Plant,
    Local,
    Math,
    Science,
    Food,
    Animal,
    Other,
}

impl Domain {
    /// All domains in canonical order.
    pub const ALL: [Domain; 8] = [
        Domain::Vehicle,
        Domain::Plant,
        Domain::Local,
        Domain::Math,
        Domain::Science,
        Domain::Food,
        Domain::Animal,
        Domain::Other,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Domain::Vehicle => "vehicle",
            Domain::Plant => "plant",
            Domain::Local => "local",
            Domain::Math => "math",
            Domain::Science => "science",
            Domain::Food => "food",
            Domain::Animal => "animal",
            Domain::Other => "other",
        }
    }

    /// Index of this domain in [`Domain::ALL`].
    pub fn index(&self) -> usize {
        Domain::ALL
            .iter()
            .position(|d| d == self)
            .expect("domain in ALL")
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("unknown domain label: {0:?}")]
pub struct UnknownDomain(pub String);

impl FromStr for Domain {
    type Err = UnknownDomain;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Domain::ALL
            .iter()
            .copied()
            .find(|d| d.as_str() == lower)
            .ok_or_else(|| UnknownDomain(s.to_string()))
    }
}

/// Reference to a query or index image. `location` is either a path to the
/// image bytes on disk or an opaque handle used by fixture clients.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageRef {
    pub id: String,
    pub location: String,
}

impl ImageRef {
    pub fn new(id: impl Into<String>, location: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            location: location.into(),
        }
    }

    /// Opaque handle with no backing file; the handle doubles as the location.
    pub fn opaque(id: impl Into<String>) -> Self {
        let id = id.into();
        Self {
            location: id.clone(),
            id,
        }
    }
}

/// One completed question/answer exchange from a multi-turn conversation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationTurn {
    pub question: String,
    pub answer: String,
}

impl ConversationTurn {
    pub fn new(question: impl Into<String>, answer: impl Into<String>) -> Self {
        Self {
            question: question.into(),
            answer: answer.into(),
        }
    }
}

/// One turn of a (possibly multi-turn) visual question.
///
/// `ground_truth` is present only for records coming from a labeled split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
    pub image: ImageRef,
    #[serde(default)]
    pub history: Vec<ConversationTurn>,
    #[serde(default)]
    pub domain: Option<Domain>,
    #[serde(default)]
    pub ground_truth: Option<String>,
}

impl Query {
    pub fn new(id: impl Into<String>, text: impl Into<String>, image: ImageRef) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            image,
            history: Vec::new(),
            domain: None,
            ground_truth: None,
        }
    }

    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = Some(domain);
        self
    }

    pub fn with_ground_truth(mut self, gt: impl Into<String>) -> Self {
        self.ground_truth = Some(gt.into());
        self
    }

    pub fn with_history(mut self, history: Vec<ConversationTurn>) -> Self {
        self.history = history;
        self
    }
}

/// A dense embedding. The dimension is a property of the index the vector
/// belongs to, not a global constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(pub Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Whether an answer is a substantive reply or a refusal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerKind {
    Answered,
    Refusal,
}

/// A produced answer. The kind is derived from the text: it is `Refusal`
/// exactly when the refusal lexicon matches.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub text: String,
    pub kind: AnswerKind,
}

impl Answer {
    /// Build an answer, classifying the text against the refusal lexicon.
    pub fn from_text(text: impl Into<String>) -> Self {
        let text = text.into();
        let kind = if is_refusal(&text) {
            AnswerKind::Refusal
        } else {
            AnswerKind::Answered
        };
        Self { text, kind }
    }

    /// The canonical refusal answer.
    pub fn refusal() -> Self {
        Self {
            text: crate::normalize::REFUSAL_TEXT.to_string(),
            kind: AnswerKind::Refusal,
        }
    }

    pub fn is_refusal(&self) -> bool {
        self.kind == AnswerKind::Refusal
    }
}

/// Three-valued judgment of an answer against its ground truth.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Correct,
    Incorrect,
    Missing,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Correct => "correct",
            Verdict::Incorrect => "incorrect",
            Verdict::Missing => "missing",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "correct" => Ok(Verdict::Correct),
            "incorrect" => Ok(Verdict::Incorrect),
            "missing" => Ok(Verdict::Missing),
            other => Err(format!("unknown verdict: {other:?}")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn domain_has_exactly_eight_members() {
        assert_eq!(Domain::ALL.len(), 8);
    }

    #[test]
    fn domain_parse_print_round_trips() {
        for d in Domain::ALL {
            assert_eq!(d.as_str().parse::<Domain>().unwrap(), d);
        }
    }

    #[test]
    fn domain_parse_is_case_insensitive() {
        assert_eq!("VEHICLE".parse::<Domain>().unwrap(), Domain::Vehicle);
        assert_eq!("  Plant ".parse::<Domain>().unwrap(), Domain::Plant);
    }

    #[test]
    fn unknown_domain_label_rejected() {
        assert!("weather".parse::<Domain>().is_err());
        assert!("".parse::<Domain>().is_err());
    }

    #[test]
    fn answer_kind_follows_refusal_lexicon() {
        assert_eq!(Answer::from_text("I don't know").kind, AnswerKind::Refusal);
        assert_eq!(
            Answer::from_text("Volkswagen Beetle").kind,
            AnswerKind::Answered
        );
        assert!(Answer::refusal().is_refusal());
    }

    #[test]
    fn verdict_has_three_members_and_round_trips() {
        for v in [Verdict::Correct, Verdict::Incorrect, Verdict::Missing] {
            assert_eq!(v.as_str().parse::<Verdict>().unwrap(), v);
        }
        assert!("unknown".parse::<Verdict>().is_err());
    }

    #[test]
    fn domain_serde_uses_lowercase() {
        let json = serde_json::to_string(&Domain::Vehicle).unwrap();
        assert_eq!(json, "\"vehicle\"");
        let back: Domain = serde_json::from_str("\"math\"").unwrap();
        assert_eq!(back, Domain::Math);
    }
}
