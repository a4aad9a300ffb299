//! Hallucination-control data factory: answerability estimation, SFT / DPO
//! / GRPO dataset construction, reward computation, and training-recipe
//! export.
//!
//! Datasets serialize as one JSON object per line with a `kind`
//! discriminator; the recipe serializes as key=value text.

use serde::{Deserialize, Serialize};

use crate::normalize::is_refusal;
use crate::types::Verdict;

/// The literal refusal target written into training data.
pub const REFUSAL_LABEL: &str = "I don't know";

/// Default number of sampled answers feeding answerability estimation.
pub const DEFAULT_ANSWERABILITY_SAMPLES: usize = 5;
/// Default correct-ratio threshold for calling a query answerable.
pub const DEFAULT_MIN_CORRECT_RATIO: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum RefusalError {
    #[error("empty input")]
    EmptyInput,
    #[error("answerable query {0} has no ground truth")]
    MissingGroundTruth(String),
    #[error("record {0} is missing {1}")]
    MissingField(String, &'static str),
    #[error("reward scale k must be positive, got {0}")]
    NonPositiveK(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerabilityLabel {
    Answerable,
    Unanswerable,
}

/// A query's sampled verdicts and the label the threshold rule assigns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnswerabilityRecord {
    pub query_id: String,
    pub sample_verdicts: Vec<Verdict>,
    pub label: AnswerabilityLabel,
}

/// Answerable iff the fraction of Correct sample verdicts reaches
/// `min_correct_ratio`.
pub fn estimate_answerability(
    verdicts: &[Verdict],
    min_correct_ratio: f64,
) -> Result<AnswerabilityLabel, RefusalError> {
    if verdicts.is_empty() {
        return Err(RefusalError::EmptyInput);
    }
    let correct = verdicts.iter().filter(|v| **v == Verdict::Correct).count();
    let ratio = correct as f64 / verdicts.len() as f64;
    Ok(if ratio >= min_correct_ratio {
        AnswerabilityLabel::Answerable
    } else {
        AnswerabilityLabel::Unanswerable
    })
}

/// Builder input: one labeled query with its retrieval context and the
/// answers collected while estimating answerability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledQuery {
    pub query_id: String,
    pub question: String,
    /// Retrieved chunks rendered for the prompt.
    pub context: String,
    pub label: AnswerabilityLabel,
    #[serde(default)]
    pub ground_truth: Option<String>,
    /// A recorded correct answer (answerable queries).
    #[serde(default)]
    pub correct_answer: Option<String>,
    /// A recorded hallucinated (incorrect) answer (unanswerable queries).
    #[serde(default)]
    pub hallucinated_answer: Option<String>,
}

impl LabeledQuery {
    /// The prompt context the tuned model sees: retrieved chunks plus the
    /// question.
    pub fn prompt(&self) -> String {
        format!("{}\n\nQuestion: {}", self.context, self.question)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SftRecord {
    pub kind: String, // always "sft"
    pub query_id: String,
    pub prompt: String,
    pub target: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpoRecord {
    pub kind: String, // always "dpo"
    pub query_id: String,
    pub prompt: String,
    pub better: String,
    pub worse: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrpoRecord {
    pub kind: String, // always "grpo"
    pub query_id: String,
    pub prompt: String,
    pub answer: String,
    pub reward: f64,
}

/// SFT mapping: unanswerable queries learn the refusal label, answerable
/// queries learn their ground truth.
pub fn build_sft_dataset(records: &[LabeledQuery]) -> Result<Vec<SftRecord>, RefusalError> {
    records
        .iter()
        .map(|record| {
            let target = match record.label {
                AnswerabilityLabel::Unanswerable => REFUSAL_LABEL.to_string(),
                AnswerabilityLabel::Answerable => record
                    .ground_truth
                    .clone()
                    .ok_or_else(|| RefusalError::MissingGroundTruth(record.query_id.clone()))?,
            };
            Ok(SftRecord {
                kind: "sft".to_string(),
                query_id: record.query_id.clone(),
                prompt: record.prompt(),
                target,
            })
        })
        .collect()
}

/// Records skipped by a builder, with the reason per query id.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SkipReport {
    pub skipped: Vec<(String, String)>,
}

impl SkipReport {
    pub fn count(&self) -> usize {
        self.skipped.len()
    }
}

/// DPO mapping: answerable pairs prefer the correct answer over a refusal;
/// unanswerable pairs prefer the refusal over a recorded hallucination.
/// Unanswerable records with no hallucinated sample are skipped and
/// reported; answerable records must carry a correct answer.
pub fn build_dpo_dataset(
    records: &[LabeledQuery],
) -> Result<(Vec<DpoRecord>, SkipReport), RefusalError> {
    let mut out = Vec::new();
    let mut skips = SkipReport::default();
    for record in records {
        let (better, worse) = match record.label {
            AnswerabilityLabel::Answerable => {
                let correct = record.correct_answer.clone().ok_or_else(|| {
                    RefusalError::MissingField(record.query_id.clone(), "correct_answer")
                })?;
                if is_refusal(&correct) {
                    // a refusal on both sides is not a preference
                    skips.skipped.push((
                        record.query_id.clone(),
                        "correct answer is itself a refusal".to_string(),
                    ));
                    continue;
                }
                (correct, REFUSAL_LABEL.to_string())
            }
            AnswerabilityLabel::Unanswerable => match record.hallucinated_answer.clone() {
                Some(hallucination) if !is_refusal(&hallucination) => {
                    (REFUSAL_LABEL.to_string(), hallucination)
                }
                Some(_) => {
                    skips.skipped.push((
                        record.query_id.clone(),
                        "hallucinated answer is itself a refusal".to_string(),
                    ));
                    continue;
                }
                None => {
                    skips.skipped.push((
                        record.query_id.clone(),
                        "no hallucinated sample recorded".to_string(),
                    ));
                    continue;
                }
            },
        };
        out.push(DpoRecord {
            kind: "dpo".to_string(),
            query_id: record.query_id.clone(),
            prompt: record.prompt(),
            better,
            worse,
        });
    }
    Ok((out, skips))
}

/// Scalar reward: Correct -> +k, refusal -> 0, Incorrect -> -1.
pub fn compute_reward(verdict: Verdict, k: f64) -> Result<f64, RefusalError> {
    if k.is_nan() || k <= 0.0 {
        return Err(RefusalError::NonPositiveK(format!("{k}")));
    }
    Ok(match verdict {
        Verdict::Correct => k,
        Verdict::Missing => 0.0,
        Verdict::Incorrect => -1.0,
    })
}

/// One GRPO record per sampled answer, rewarded by its verdict.
pub fn build_grpo_dataset(
    samples: &[(LabeledQuery, String, Verdict)],
    k: f64,
) -> Result<Vec<GrpoRecord>, RefusalError> {
    samples
        .iter()
        .map(|(record, answer, verdict)| {
            Ok(GrpoRecord {
                kind: "grpo".to_string(),
                query_id: record.query_id.clone(),
                prompt: record.prompt(),
                answer: answer.clone(),
                reward: compute_reward(*verdict, k)?,
            })
        })
        .collect()
}

/// LoRA fine-tuning hyperparameters, emitted verbatim for the training
/// consumer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecipe {
    pub lora_alpha: u32,
    pub lora_dropout: f64,
    pub lora_r: u32,
    pub target_modules: Vec<String>,
    pub bias: String,
    pub quantized_4bit: bool,
    pub max_seq_length: Vec<u32>,
    pub per_device_train_batch_size: u32,
    pub gradient_accumulation_steps: u32,
    pub optim: String,
    pub learning_rate: String,
    pub max_grad_norm: f64,
    pub scheduler: String,
    pub warm_up_ratio: f64,
}

impl Default for TrainingRecipe {
    fn default() -> Self {
        Self {
            lora_alpha: 16,
            lora_dropout: 0.1,
            lora_r: 8,
            target_modules: [
                "k_proj",
                "q_proj",
                "v_proj",
                "up_proj",
                "down_proj",
                "gate_proj",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            bias: "none".to_string(),
            quantized_4bit: true,
            max_seq_length: vec![2048, 4096],
            per_device_train_batch_size: 1,
            gradient_accumulation_steps: 4,
            optim: "adamw_hf".to_string(),
            learning_rate: "2e-4".to_string(),
            max_grad_norm: 0.3,
            scheduler: "cosine".to_string(),
            warm_up_ratio: 0.1,
        }
    }
}

impl TrainingRecipe {
    /// Key=value text, one field per line.
    pub fn to_key_values(&self) -> String {
        format!(
            "lora_alpha={}\n\
             lora_dropout={}\n\
             lora_r={}\n\
             target_modules={}\n\
             bias={}\n\
             quantized_4bit={}\n\
             max_seq_length={}\n\
             per_device_train_batch_size={}\n\
             gradient_accumulation_steps={}\n\
             optim={}\n\
             learning_rate={}\n\
             max_grad_norm={}\n\
             scheduler={}\n\
             warm_up_ratio={}\n",
            self.lora_alpha,
            self.lora_dropout,
            self.lora_r,
            self.target_modules.join(","),
            self.bias,
            self.quantized_4bit,
            self.max_seq_length
                .iter()
                .map(u32::to_string)
                .collect::<Vec<_>>()
                .join("/"),
            self.per_device_train_batch_size,
            self.gradient_accumulation_steps,
            self.optim,
            self.learning_rate,
            self.max_grad_norm,
            self.scheduler,
            self.warm_up_ratio,
        )
    }
}

/// Emit the tuning hyperparameters in the documented key=value format.
pub fn export_training_recipe() -> TrainingRecipe {
    TrainingRecipe::default()
}
