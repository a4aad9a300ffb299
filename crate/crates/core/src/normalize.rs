//! Answer normalization and refusal detection.
//!
//! Normalization is deliberately conservative: only terminal sentence
//! punctuation is stripped, so entity names like "3.5L" survive intact.

/// The canonical refusal string emitted by every component that abstains.
pub const REFUSAL_TEXT: &str = "i don't know";

/// Fixed refusal lexicon, compared against normalized text.
pub const REFUSAL_LEXICON: [&str; 3] = ["i don't know", "i do not know", "i dont know"];

/// Canonicalize an answer: lowercase, trim, collapse internal whitespace
/// runs to a single space, and strip terminal '.', '!' and '?'.
pub fn normalize_answer(text: &str) -> String {
    let lower = text.to_lowercase();
    let mut out = String::with_capacity(lower.len());
    let mut last_was_space = true;
    for ch in lower.chars() {
        if ch.is_whitespace() {
            if !last_was_space {
                out.push(' ');
                last_was_space = true;
            }
        } else {
            out.push(ch);
            last_was_space = false;
        }
    }
    // Stripping terminal punctuation can expose trailing whitespace, so
    // peel both until the end is stable.
    while out.ends_with(['.', '!', '?', ' ']) {
        out.pop();
    }
    out
}

/// True iff the normalized text is in the refusal lexicon.
pub fn is_refusal(text: &str) -> bool {
    let normalized = normalize_answer(text);
    REFUSAL_LEXICON.contains(&normalized.as_str())
}
