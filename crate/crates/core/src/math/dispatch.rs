//! Tool selection and execution.
//!
//! Two entry points exist: `parse_tool_call` decodes a model-emitted call in
//! the documented API form (`calc(expr)`, `base(digits,from,to)`,
//! `balance(equation)`), while `detect_tool` picks a tool from raw query
//! text with deterministic rules:
//!
//! 1. queries containing `->` or `=` are scanned for the longest word span
//!    that parses as a chemical equation;
//! 2. queries mentioning a radix (the word "base" with numbers, or a radix
//!    word like "hexadecimal") become base conversions; when only the target
//!    radix is named the source defaults to base 10;
//! 3. otherwise the longest word span that parses as an arithmetic
//!    expression (and contains a digit or an operator) becomes a calculation.

use super::baseconv::convert_base;
use super::chem::{balance, format_balanced, parse_chemical_equation};
use super::expr::parse_expression;
use super::poly::simplify;
use super::MathError;
use crate::normalize::REFUSAL_TEXT;

/// A decoded call to one of the three tools.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ToolCall {
    Calc(String),
    Base {
        digits: String,
        from_base: u32,
        to_base: u32,
    },
    Balance(String),
}

/// Parse a tool call in the documented API form.
pub fn parse_tool_call(text: &str) -> Result<ToolCall, MathError> {
    let trimmed = text.trim();
    let open = trimmed
        .find('(')
        .ok_or_else(|| MathError::parse(trimmed.len(), "expected '(' in tool call"))?;
    if !trimmed.ends_with(')') {
        return Err(MathError::parse(
            trimmed.len(),
            "expected ')' at end of tool call",
        ));
    }
    let name = trimmed[..open].trim();
    let args = &trimmed[open + 1..trimmed.len() - 1];
    match name {
        "calc" => Ok(ToolCall::Calc(args.trim().to_string())),
        "balance" => Ok(ToolCall::Balance(args.trim().to_string())),
        "base" => {
            let parts: Vec<&str> = args.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(MathError::parse(
                    open,
                    "base() takes digits,from_base,to_base",
                ));
            }
            let from_base: u32 = parts[1]
                .parse()
                .map_err(|_| MathError::parse(open, "invalid from_base"))?;
            let to_base: u32 = parts[2]
                .parse()
                .map_err(|_| MathError::parse(open, "invalid to_base"))?;
            Ok(ToolCall::Base {
                digits: parts[0].to_string(),
                from_base,
                to_base,
            })
        }
        other => Err(MathError::parse(0, format!("unknown tool {other:?}"))),
    }
}

/// Execute a tool call, rendering the result as a short answer string.
pub fn execute_tool(call: &ToolCall) -> Result<String, MathError> {
    match call {
        ToolCall::Calc(source) => {
            let expr = parse_expression(source)?;
            Ok(simplify(&expr)?.to_string())
        }
        ToolCall::Base {
            digits,
            from_base,
            to_base,
        } => convert_base(digits, *from_base, *to_base),
        ToolCall::Balance(source) => {
            let eq = parse_chemical_equation(source)?;
            let result = balance(&eq)?;
            Ok(format_balanced(&eq, &result))
        }
    }
}

/// Rule-mode tool detection over raw query text.
pub fn detect_tool(query_text: &str) -> Result<ToolCall, MathError> {
    let stripped = query_text.trim().trim_end_matches(['?', '.', '!']).trim();
    if stripped.is_empty() {
        return Err(MathError::NoToolMatched);
    }

    if stripped.contains("->") || stripped.contains('=') {
        if let Some(call) = detect_balance(stripped) {
            return Ok(call);
        }
    }
    if let Some(call) = detect_base(stripped) {
        return Ok(call);
    }
    if let Some(call) = detect_calc(stripped) {
        return Ok(call);
    }
    Err(MathError::NoToolMatched)
}

/// Rule-mode dispatch: detect, execute, and render tool failures as the
/// canonical refusal instead of crashing the pipeline.
pub fn dispatch_rule_mode(query_text: &str) -> Result<String, MathError> {
    let call = detect_tool(query_text)?;
    Ok(execute_tool(&call).unwrap_or_else(|_| REFUSAL_TEXT.to_string()))
}

fn words(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// Longest word span (ties to the leftmost) accepted by `probe`.
fn longest_parseable_span<T>(text: &str, probe: impl Fn(&str) -> Option<T>) -> Option<(String, T)> {
    let words = words(text);
    let n = words.len();
    let mut best: Option<(usize, String, T)> = None;
    for start in 0..n {
        for end in (start + 1)..=n {
            let span = words[start..end].join(" ");
            if let Some(value) = probe(&span) {
                let len = end - start;
                let better = match &best {
                    None => true,
                    Some((best_len, _, _)) => len > *best_len,
                };
                if better {
                    best = Some((len, span, value));
                }
            }
        }
    }
    best.map(|(_, span, value)| (span, value))
}

fn detect_balance(text: &str) -> Option<ToolCall> {
    let (span, _) = longest_parseable_span(text, |span| {
        if !span.contains("->") && !span.contains('=') {
            return None;
        }
        parse_chemical_equation(span).ok()
    })?;
    Some(ToolCall::Balance(span))
}

fn detect_calc(text: &str) -> Option<ToolCall> {
    let (span, _) = longest_parseable_span(text, |span| {
        // bare words parse as variables; demand arithmetic substance
        let has_digit = span.chars().any(|c| c.is_ascii_digit());
        let has_operator = span
            .chars()
            .any(|c| matches!(c, '+' | '-' | '*' | '/' | '^'));
        if !has_digit && !has_operator {
            return None;
        }
        parse_expression(span).ok()
    })?;
    Some(ToolCall::Calc(span))
}

const RADIX_WORDS: [(&str, u32); 5] = [
    ("binary", 2),
    ("octal", 8),
    ("decimal", 10),
    ("hexadecimal", 16),
    ("hex", 16),
];

fn detect_base(text: &str) -> Option<ToolCall> {
    let lower = text.to_lowercase();
    let tokens = words(&lower);
    let original_tokens = words(text);

    #[derive(PartialEq)]
    enum Direction {
        From,
        To,
        Unspecified,
    }
    let direction_of = |mention_start: usize| -> Direction {
        match mention_start
            .checked_sub(1)
            .and_then(|i| tokens.get(i))
            .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()))
        {
            Some("from") => Direction::From,
            Some("to") | Some("into") | Some("in") => Direction::To,
            _ => Direction::Unspecified,
        }
    };

    // each mention: (index of the first token of the mention, radix, token index of a consumed number)
    let mut mentions: Vec<(Direction, u32)> = Vec::new();
    let mut consumed: Vec<usize> = Vec::new();
    for (i, token) in tokens.iter().enumerate() {
        let clean = token.trim_matches(|c: char| !c.is_alphanumeric());
        if clean == "base" {
            if let Some(next) = tokens.get(i + 1) {
                let next_clean = next.trim_matches(|c: char| !c.is_alphanumeric());
                if let Ok(radix) = next_clean.parse::<u32>() {
                    if (2..=36).contains(&radix) {
                        mentions.push((direction_of(i), radix));
                        consumed.push(i + 1);
                        continue;
                    }
                }
            }
        }
        if let Some((_, radix)) = RADIX_WORDS.iter().find(|(w, _)| *w == clean) {
            mentions.push((direction_of(i), *radix));
        }
    }
    if mentions.is_empty() {
        return None;
    }

    let explicit_from = mentions
        .iter()
        .find(|(d, _)| *d == Direction::From)
        .map(|(_, r)| *r);
    let explicit_to = mentions
        .iter()
        .find(|(d, _)| *d == Direction::To)
        .map(|(_, r)| *r);
    let mut unspecified = mentions
        .iter()
        .filter(|(d, _)| *d == Direction::Unspecified)
        .map(|(_, r)| *r);
    let (from_base, to_base) = match (explicit_from, explicit_to) {
        (Some(f), Some(t)) => (f, t),
        (Some(f), None) => (f, unspecified.next().unwrap_or(10)),
        (None, Some(t)) => (unspecified.next().unwrap_or(10), t),
        (None, None) => {
            let first = unspecified.next().expect("mentions non-empty");
            match unspecified.next() {
                Some(second) => (first, second),
                None => (10, first),
            }
        }
    };

    // operand: first token that is a valid digit string in from_base and was
    // not consumed as a radix number
    for (i, token) in original_tokens.iter().enumerate() {
        if consumed.contains(&i) {
            continue;
        }
        let clean = token.trim_matches(|c: char| !c.is_ascii_alphanumeric() && c != '-');
        if clean.is_empty() {
            continue;
        }
        let body = clean.strip_prefix('-').unwrap_or(clean);
        if body.is_empty() {
            continue;
        }
        let valid = body.chars().all(|c| match c {
            '0'..='9' => (c as u32 - '0' as u32) < from_base,
            'a'..='z' => (c as u32 - 'a' as u32 + 10) < from_base,
            'A'..='Z' => (c as u32 - 'A' as u32 + 10) < from_base,
            _ => false,
        });
        // skip plain radix words matched above
        if RADIX_WORDS.iter().any(|(w, _)| *w == clean.to_lowercase()) {
            continue;
        }
        if valid && body.chars().any(|c| c.is_ascii_alphanumeric()) {
            // avoid treating ordinary words as base-36 digit strings unless
            // the token contains a digit or the base is numeric-only
            if from_base <= 10 || clean.chars().any(|c| c.is_ascii_digit()) || body.len() <= 4 {
                return Some(ToolCall::Base {
                    digits: clean.to_string(),
                    from_base,
                    to_base,
                });
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_mode_calculation() {
        assert_eq!(dispatch_rule_mode("What is 2+3*4?").unwrap(), "14");
    }

    #[test]
    fn rule_mode_simplification_with_variables() {
        assert_eq!(dispatch_rule_mode("simplify 2*x + 3*x").unwrap(), "5*x");
    }

    #[test]
    fn rule_mode_balance() {
        assert_eq!(
            dispatch_rule_mode("Balance H2 + O2 -> H2O").unwrap(),
            "2 H2 + 1 O2 -> 2 H2O"
        );
    }

    #[test]
    fn rule_mode_base_conversion_with_keyword() {
        let call = detect_tool("Convert 255 from base 10 to base 16").unwrap();
        assert_eq!(
            call,
            ToolCall::Base {
                digits: "255".into(),
                from_base: 10,
                to_base: 16
            }
        );
        assert_eq!(execute_tool(&call).unwrap(), "FF");
    }

    #[test]
    fn rule_mode_base_conversion_with_radix_word() {
        let call = detect_tool("Convert 255 to hexadecimal").unwrap();
        assert_eq!(
            call,
            ToolCall::Base {
                digits: "255".into(),
                from_base: 10,
                to_base: 16
            }
        );
    }

    #[test]
    fn rule_mode_no_tool_matched() {
        assert_eq!(
            detect_tool("what color is the sky").unwrap_err(),
            MathError::NoToolMatched
        );
    }

    #[test]
    fn tool_errors_render_as_refusal() {
        // detected as a calculation, but division by zero inside
        assert_eq!(dispatch_rule_mode("what is 1/0").unwrap(), REFUSAL_TEXT);
        // detected as balance, but the equation is ambiguous
        assert_eq!(
            dispatch_rule_mode("balance C + O2 -> CO + CO2").unwrap(),
            REFUSAL_TEXT
        );
    }

    #[test]
    fn api_call_parsing() {
        assert_eq!(
            parse_tool_call("calc(2+3*4)").unwrap(),
            ToolCall::Calc("2+3*4".into())
        );
        assert_eq!(
            parse_tool_call(" base( 255, 10, 16 ) ").unwrap(),
            ToolCall::Base {
                digits: "255".into(),
                from_base: 10,
                to_base: 16
            }
        );
        assert_eq!(
            parse_tool_call("balance(H2 + O2 -> H2O)").unwrap(),
            ToolCall::Balance("H2 + O2 -> H2O".into())
        );
    }

    #[test]
    fn api_call_rejects_unknown_tool_and_arity() {
        assert!(parse_tool_call("derive(x^2)").is_err());
        assert!(parse_tool_call("base(255,10)").is_err());
        assert!(parse_tool_call("calc 2+2").is_err());
    }

    #[test]
    fn executed_api_call_examples() {
        assert_eq!(
            execute_tool(&parse_tool_call("base(255,10,16)").unwrap()).unwrap(),
            "FF"
        );
        assert_eq!(
            execute_tool(&parse_tool_call("calc((1/3)^2)").unwrap()).unwrap(),
            "1/9"
        );
    }

    #[test]
    fn equals_query_falls_through_to_calc() {
        // '=' present but no parseable equation around it
        assert_eq!(dispatch_rule_mode("2+2 = ?").unwrap(), "4");
    }

    #[test]
    fn longest_span_wins() {
        // "H2 + O2 -> H2O" must beat the shorter "O2 -> H2O"
        let call = detect_tool("please balance H2 + O2 -> H2O for me ->").unwrap();
        assert_eq!(call, ToolCall::Balance("H2 + O2 -> H2O".into()));
    }
}
