//! Judging, refusal-score computation, stratified splitting, and score
//! reports.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::gateway::{GatewayError, ModelGateway, ModelRequest};
use crate::normalize::normalize_answer;
use crate::prompts::{render, JUDGE_TEMPLATE};
use crate::rng::SplitMix64;
use crate::types::{Answer, Domain, Query, Verdict};

#[derive(Clone, Debug, thiserror::Error)]
pub enum EvalError {
    #[error("query has no ground truth")]
    MissingGroundTruth,
    #[error("empty input")]
    EmptyInput,
    #[error("val_ratio must be strictly between 0 and 1, got {0}")]
    InvalidRatio(f64),
    #[error("judge template must contain {0}")]
    InvalidTemplate(&'static str),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JudgeMode {
    Llm,
    Exact,
}

/// Judge configuration. The llm-mode template is the canonical judging
/// prompt; exact mode is a deterministic token-containment check for
/// offline runs.
#[derive(Clone, Debug)]
pub struct JudgeConfig {
    pub mode: JudgeMode,
    pub model_id: String,
    pub prompt_template: String,
}

impl JudgeConfig {
    pub fn exact() -> Self {
        Self {
            mode: JudgeMode::Exact,
            model_id: String::new(),
            prompt_template: String::new(),
        }
    }

    pub fn llm(model_id: impl Into<String>) -> Self {
        Self {
            mode: JudgeMode::Llm,
            model_id: model_id.into(),
            prompt_template: JUDGE_TEMPLATE.to_string(),
        }
    }

    /// Replace the llm template; it must keep all three placeholders.
    pub fn with_template(mut self, template: impl Into<String>) -> Result<Self, EvalError> {
        let template = template.into();
        for placeholder in ["{query}", "{ground_truth}", "{prediction}"] {
            if !template.contains(placeholder) {
                return Err(EvalError::InvalidTemplate(match placeholder {
                    "{query}" => "{query}",
                    "{ground_truth}" => "{ground_truth}",
                    _ => "{prediction}",
                }));
            }
        }
        self.prompt_template = template;
        Ok(self)
    }
}

/// Verdict producer. Refusals short-circuit to `Missing` without any model
/// call in either mode.
pub struct Judge {
    config: JudgeConfig,
    gateway: Option<Arc<ModelGateway>>,
    unparseable: AtomicU64,
}

impl Judge {
    pub fn exact() -> Self {
        Self {
            config: JudgeConfig::exact(),
            gateway: None,
            unparseable: AtomicU64::new(0),
        }
    }

    pub fn llm(gateway: Arc<ModelGateway>, model_id: impl Into<String>) -> Self {
        Self {
            config: JudgeConfig::llm(model_id),
            gateway: Some(gateway),
            unparseable: AtomicU64::new(0),
        }
    }

    pub fn with_config(config: JudgeConfig, gateway: Option<Arc<ModelGateway>>) -> Self {
        Self {
            config,
            gateway,
            unparseable: AtomicU64::new(0),
        }
    }

    pub fn mode(&self) -> JudgeMode {
        self.config.mode
    }

    /// Responses that parsed as neither true nor false (counted for audit;
    /// each one was scored Incorrect).
    pub fn unparseable_count(&self) -> u64 {
        self.unparseable.load(Ordering::Relaxed)
    }

    pub fn judge(&self, query: &Query, prediction: &Answer) -> Result<Verdict, EvalError> {
        let ground_truth = query
            .ground_truth
            .as_deref()
            .ok_or(EvalError::MissingGroundTruth)?;
        if prediction.is_refusal() {
            return Ok(Verdict::Missing);
        }
        match self.config.mode {
            JudgeMode::Exact => Ok(exact_verdict(ground_truth, &prediction.text)),
            JudgeMode::Llm => {
                let gateway = self
                    .gateway
                    .as_ref()
                    .ok_or(GatewayError::BackendUnavailable {
                        reason: "llm judge has no gateway".into(),
                    })?;
                let prompt = render(
                    &self.config.prompt_template,
                    &[
                        ("query", query.text.as_str()),
                        ("ground_truth", ground_truth),
                        ("prediction", prediction.text.as_str()),
                    ],
                );
                let request = ModelRequest::text(&self.config.model_id, prompt);
                let response = gateway.complete(&request)?;
                let lower = response.text.trim().to_lowercase();
                if lower.starts_with("true") {
                    Ok(Verdict::Correct)
                } else if lower.starts_with("false") {
                    Ok(Verdict::Incorrect)
                } else {
                    // conservative: unparseable counts against the answer
                    self.unparseable.fetch_add(1, Ordering::Relaxed);
                    Ok(Verdict::Incorrect)
                }
            }
        }
    }
}

/// Exact-mode rule: correct iff the normalized prediction equals the
/// normalized ground truth or contains it as a contiguous token run.
fn exact_verdict(ground_truth: &str, prediction: &str) -> Verdict {
    let gt_norm = normalize_answer(ground_truth);
    let pred_norm = normalize_answer(prediction);
    let gt: Vec<&str> = gt_norm.split_whitespace().collect();
    let pred: Vec<&str> = pred_norm.split_whitespace().collect();
    if gt.is_empty() {
        return Verdict::Incorrect;
    }
    let contains = pred.len() >= gt.len()
        && (0..=pred.len() - gt.len()).any(|start| pred[start..start + gt.len()] == gt[..]);
    if contains {
        Verdict::Correct
    } else {
        Verdict::Incorrect
    }
}

/// (#Correct − #Incorrect) / N; abstentions contribute zero.
pub fn refusal_score(verdicts: &[Verdict]) -> Result<f64, EvalError> {
    if verdicts.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let correct = verdicts.iter().filter(|v| **v == Verdict::Correct).count() as f64;
    let incorrect = verdicts
        .iter()
        .filter(|v| **v == Verdict::Incorrect)
        .count() as f64;
    Ok((correct - incorrect) / verdicts.len() as f64)
}

/// Deterministic stratified split.
///
/// Items are grouped by `stratum_key`, shuffled per stratum with a seeded
/// generator, and `floor(|stratum| * val_ratio)` of each stratum goes to
/// the validation side; the global rounding remainder is resolved by
/// largest remainder so the overall count is `round(N * val_ratio)`.
/// Output preserves the input order within each side.
pub fn stratified_split<T: Clone>(
    items: &[T],
    stratum_key: impl Fn(&T) -> (String, String),
    val_ratio: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>), EvalError> {
    if !(val_ratio > 0.0 && val_ratio < 1.0) {
        return Err(EvalError::InvalidRatio(val_ratio));
    }
    let mut strata: BTreeMap<(String, String), Vec<usize>> = BTreeMap::new();
    for (index, item) in items.iter().enumerate() {
        strata.entry(stratum_key(item)).or_default().push(index);
    }

    let target_total = (items.len() as f64 * val_ratio).round() as usize;
    let quotas: Vec<(&(String, String), usize, f64)> = strata
        .iter()
        .map(|(key, members)| {
            let exact = members.len() as f64 * val_ratio;
            let base = exact.floor() as usize;
            (key, base, exact - base as f64)
        })
        .collect();
    let base_sum: usize = quotas.iter().map(|(_, base, _)| base).sum();
    let extras = target_total.saturating_sub(base_sum);

    // largest remainders first, ties in stratum-key order
    let mut by_remainder: Vec<usize> = (0..quotas.len()).collect();
    by_remainder.sort_by(|&a, &b| {
        quotas[b]
            .2
            .partial_cmp(&quotas[a].2)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| quotas[a].0.cmp(quotas[b].0))
    });
    let mut val_counts: Vec<usize> = quotas.iter().map(|(_, base, _)| *base).collect();
    for &q in by_remainder.iter().take(extras) {
        val_counts[q] += 1;
    }

    let mut rng = SplitMix64::new(seed);
    let mut val_indices: Vec<usize> = Vec::with_capacity(target_total);
    for ((_, members), take) in strata.iter().zip(&val_counts) {
        let mut shuffled = members.clone();
        rng.shuffle(&mut shuffled);
        val_indices.extend(shuffled.into_iter().take(*take));
    }
    let in_val: std::collections::HashSet<usize> = val_indices.iter().copied().collect();

    let mut train = Vec::with_capacity(items.len() - in_val.len());
    let mut val = Vec::with_capacity(in_val.len());
    for (index, item) in items.iter().enumerate() {
        if in_val.contains(&index) {
            val.push(item.clone());
        } else {
            train.push(item.clone());
        }
    }
    Ok((train, val))
}

/// Per-domain verdict aggregate.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub label: String,
    pub n: u64,
    pub correct: u64,
    pub incorrect: u64,
    pub missing: u64,
    pub accuracy: f64,
    pub refusal_score: f64,
}

impl ReportRow {
    fn from_counts(label: String, correct: u64, incorrect: u64, missing: u64) -> Self {
        let n = correct + incorrect + missing;
        let (accuracy, refusal_score) = if n == 0 {
            (0.0, 0.0)
        } else {
            (
                correct as f64 / n as f64,
                (correct as f64 - incorrect as f64) / n as f64,
            )
        };
        Self {
            label,
            n,
            correct,
            incorrect,
            missing,
            accuracy,
            refusal_score,
        }
    }
}

/// Per-domain rows (domains that appear, in canonical order) plus an
/// overall row.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreReport {
    pub rows: Vec<ReportRow>,
    pub overall: ReportRow,
}

impl ScoreReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("domain,n,correct,incorrect,missing,accuracy,refusal_score\n");
        for row in self.rows.iter().chain(std::iter::once(&self.overall)) {
            out.push_str(&format!(
                "{},{},{},{},{},{:.4},{:.4}\n",
                row.label,
                row.n,
                row.correct,
                row.incorrect,
                row.missing,
                row.accuracy,
                row.refusal_score
            ));
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<10} {:>6} {:>8} {:>10} {:>8} {:>9} {:>14}\n",
            "domain", "n", "correct", "incorrect", "missing", "accuracy", "refusal_score"
        ));
        for row in self.rows.iter().chain(std::iter::once(&self.overall)) {
            out.push_str(&format!(
                "{:<10} {:>6} {:>8} {:>10} {:>8} {:>9.4} {:>14.4}\n",
                row.label,
                row.n,
                row.correct,
                row.incorrect,
                row.missing,
                row.accuracy,
                row.refusal_score
            ));
        }
        if self.overall.n == 0 {
            out.push_str("(no results)\n");
        }
        out
    }
}

/// Aggregate judged results into per-domain and overall rows. Results whose
/// query has no domain tag are counted under `other`.
pub fn score_report(results: &[(Query, Answer, Verdict)]) -> ScoreReport {
    let mut counts: BTreeMap<Domain, (u64, u64, u64)> = BTreeMap::new();
    for (query, _answer, verdict) in results {
        let domain = query.domain.unwrap_or(Domain::Other);
        let entry = counts.entry(domain).or_default();
        match verdict {
            Verdict::Correct => entry.0 += 1,
            Verdict::Incorrect => entry.1 += 1,
            Verdict::Missing => entry.2 += 1,
        }
    }
    let mut rows = Vec::new();
    let mut total = (0u64, 0u64, 0u64);
    for domain in Domain::ALL {
        if let Some(&(c, i, m)) = counts.get(&domain) {
            total.0 += c;
            total.1 += i;
            total.2 += m;
            rows.push(ReportRow::from_counts(domain.as_str().to_string(), c, i, m));
        }
    }
    let overall = ReportRow::from_counts("overall".to_string(), total.0, total.1, total.2);
    ScoreReport { rows, overall }
}
