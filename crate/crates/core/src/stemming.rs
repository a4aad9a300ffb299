//! Tokenization and stemming used for entity-name matching and the lexical
//! fallback reranker.
//!
//! Tokens are maximal alphanumeric runs, lowercased, then stemmed with the
//! Snowball English (Porter2) stemmer. The stemmer choice is fixed: changing
//! it changes retrieval and matching behavior.

use rust_stemmers::{Algorithm, Stemmer};
use std::collections::BTreeSet;

/// Lowercase, split on non-alphanumerics, and stem every token.
pub fn stem_tokens(text: &str) -> Vec<String> {
    let stemmer = Stemmer::create(Algorithm::English);
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| stemmer.stem(t).into_owned())
        .collect()
}

/// Stemmed token set (order-free, duplicate-free).
pub fn stem_token_set(text: &str) -> BTreeSet<String> {
    stem_tokens(text).into_iter().collect()
}

/// Jaccard similarity of the stemmed token sets of two texts.
/// Two empty sets score 0 (an empty query matches nothing).
pub fn stemmed_jaccard(a: &str, b: &str) -> f64 {
    let sa = stem_token_set(a);
    let sb = stem_token_set(b);
    if sa.is_empty() && sb.is_empty() {
        return 0.0;
    }
    let intersection = sa.intersection(&sb).count();
    let union = sa.union(&sb).count();
    intersection as f64 / union as f64
}
