//! Prompt templates and rendering.
//!
//! The judge, Dino, image-rerank, entity, rewrite, and context-rewrite
//! templates are frozen verbatim (including their original typos); golden
//! tests pin their rendered bytes. Placeholders use `{name}` syntax and are
//! substituted literally, with no escaping.
//!
//! The classification, answer-generation, and tool-call templates are our
//! own wording and carry no fidelity guarantee.

use crate::types::ConversationTurn;

/// Judge prompt deciding whether a prediction matches the ground truth.
/// Placeholders: `{query}`, `{ground_truth}`, `{prediction}`.
pub const JUDGE_TEMPLATE: &str = "\
You are an expert evaluator for question answering systems.
Your task is to determine if a prediction correctly answers a question based on the ground truth.

Rules:
1. The prediction is correct if it captures all the key information from the ground truth.
2. The prediction is correct even if phrased differently as long as the meaning is the same.
3. The prediction is incorrect if it contains incorrect information or is missing essential details.


Question: {query}
Ground truth: {ground_truth}
Prediction: {prediction}

Output only 'true' or 'false' to indicate if the prediction is correct.";

/// Grounding-phrase prompt. Placeholders: `{image}`, `{query}`.
pub const DINO_TEMPLATE: &str = "\
Image: {image}
Given this image, a query, your task is to simply describe the object in the image.
Query: {query}
Output only simple object names in phrases, do not output a sentence.
Do not answer the query, just output the object name appearing in the image, not the answer or answer entity.";

/// Two-image relevance judgment. Placeholders: `{query_image}`,
/// `{index_image}`, `{query}`, `{description}`.
pub const IMAGE_RERANK_TEMPLATE: &str = "\
Image: {query_image},{index_image}
Given two images, the first one is a query image, the second one is an image about an entity, a query about the first image, descriptions about the second image, your task is to determine whether the query about the first image is about the entity in the second image.
Query: {query}
Description: {description}
If the entity in the second image appears in the first image, output Yes, otherwise, output No.";

/// Entity-name extraction. Placeholder: `{query}`.
pub const ENTITY_TEMPLATE: &str = "\
Given an image and a query about it, your task is to extract the entity's name the query is about.
If the entity is about a plant, you should output the full botanical name.
....
If the enityt is about a vehicle, you should output the vehicle's brand and model.
Query: {query}
You should output the entity's name directly.";

/// Single-turn merged-query rewrite. Placeholders: `{image}`, `{query}`.
pub const REWRITE_TEMPLATE: &str = "\
###Task You are an expert at converting visual questions into effective search queries.
Your goal is to create a comprehensive search query that will help find the most relevant information.
For each image-based question, you must create a search query that combines:
1. Key visual elements from the image (objects, text, logos, scenes, actions, etc.)
2. The core question being asked
3. Potential answer terms or relevant context
For example:
- If asking about a logo: include company name, industry, and visual description
- If asking about an object: include its appearance, category, and possible brands/models
- If asking about an event/scene: include location hints, activities, and time period clues
'''
Image:{image}
Query: {query}";

/// Extra line appended to [`REWRITE_TEMPLATE`] in cheat mode.
/// Placeholder: `{ground_truth}`.
pub const REWRITE_CHEAT_SUFFIX: &str = "Ground truth answer: {ground_truth}";

/// Context-aware merged-query rewrite. Placeholders: `{query}`, `{context}`.
pub const CONTEXT_REWRITE_TEMPLATE: &str = "\
###Task You are an expert at converting visual questions into effective search queries.
The current query is a part of multi-turn conversation. You should use the history conversation to make sure what the current query is about.
Your goal is to create a comprehensive search query that will help find the most relevant information for the currecnt query.
For each image-based question, you must create a search query that combines:
1. Key visual elements from the image (objects, text, logos, scenes, actions, etc.)
2. The core current question being asked
3. Potential answer terms or relevant context
For example:
- If asking about a logo: include company name, industry, and visual description
- If asking about an object: include its appearance, category, and possible brands/models
- If asking about an event/scene: include location hints, activities, and time period clues
Query: {query}
Context: {context}";

/// Domain classification (our wording). Placeholders: `{image}`, `{query}`.
pub const CLASSIFY_TEMPLATE: &str = "\
Image: {image}
Classify the question about the image into exactly one of these domains: vehicle, plant, local, math, science, food, animal, other.
Query: {query}
Output only the domain label, nothing else.";

/// Final answer generation over retrieved context (our wording).
/// Placeholders: `{context}`, `{query}`.
pub const ANSWER_TEMPLATE: &str = "\
Answer the question using the context below. If the context does not contain the answer and you are not certain of it, output exactly: I don't know

Context:
{context}

Question: {query}
Answer:";

/// LLM tool dispatch (our wording). Placeholder: `{query}`.
pub const TOOL_CALL_TEMPLATE: &str = "\
You can call exactly one tool to solve the problem. Available tools:
calc(expression)
base(digits,from_base,to_base)
balance(chemical_equation)
Query: {query}
Output only the tool call, nothing else.";

/// Substitute `{name}` placeholders in one pass over the template.
/// Values are inserted literally and never re-scanned, so a value that
/// happens to contain placeholder syntax cannot trigger a second substitution.
pub fn render(template: &str, substitutions: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(brace) = rest.find('{') {
        out.push_str(&rest[..brace]);
        let tail = &rest[brace..];
        let hit = substitutions.iter().find_map(|(name, value)| {
            let pattern = format!("{{{name}}}");
            tail.starts_with(&pattern)
                .then_some((pattern.len(), *value))
        });
        match hit {
            Some((pattern_len, value)) => {
                out.push_str(value);
                rest = &tail[pattern_len..];
            }
            None => {
                out.push('{');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

/// Render conversation history as alternating "Q:"/"A:" lines.
/// Empty history renders as the empty string.
pub fn render_history(history: &[ConversationTurn]) -> String {
    history
        .iter()
        .map(|turn| format!("Q: {}\nA: {}", turn.question, turn.answer))
        .collect::<Vec<_>>()
        .join("\n")
}
