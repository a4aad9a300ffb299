//! Command-line harness for the engine: batch runs, evaluation, splitting,
//! ensembling, math tools, and training-data export.

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use mmrag_core::config::RunConfig;
use mmrag_core::dataset::{query_id, record_to_query, Dataset};
use mmrag_core::ensemble::{
    apply_plan, search_subset, select_per_domain, AnswerMatrix, EnsemblePlan, MatrixVerdictOracle,
};
use mmrag_core::eval::{score_report, stratified_split};
use mmrag_core::math::dispatch_rule_mode;
use mmrag_core::pipeline::{Pipeline, QuarantineLine, ResultLine};
use mmrag_core::refusal::{
    build_dpo_dataset, build_grpo_dataset, build_sft_dataset, estimate_answerability,
    export_training_recipe, AnswerabilityLabel, LabeledQuery,
};
use mmrag_core::router::keyword_domain;
use mmrag_core::types::{Answer, Domain, ImageRef, Query, Verdict};

#[derive(Parser)]
#[command(name = "mmrag", version, about = "Domain-routed multimodal RAG engine")]
struct Cli {
    /// Config file (plain-text key=value sections)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for the persistent response cache
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// Comma-separated fixture files (response fixtures)
    #[arg(long, global = true)]
    fixtures: Option<String>,
    /// Seed for deterministic shuffles
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Bounded worker pool size
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Per-query wall-clock limit in seconds
    #[arg(long, global = true)]
    timeout_per_query: Option<u64>,
    /// Answer fixture misses with an echo marker instead of failing
    #[arg(long, global = true)]
    echo: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Predict the domain of every dataset record
    Classify {
        #[arg(long)]
        dataset: PathBuf,
        /// Output JSONL (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Answer a single query
    Answer {
        #[arg(long)]
        question: String,
        /// Image path or opaque handle
        #[arg(long)]
        image: Option<String>,
        /// Skip classification by fixing the domain
        #[arg(long)]
        domain: Option<Domain>,
    },
    /// Run a dataset end to end, writing results and a report
    Run {
        #[arg(long)]
        dataset: PathBuf,
        /// Output directory (results.jsonl, errors.jsonl, report.csv,
        /// report.txt, stats.json)
        #[arg(long)]
        out: PathBuf,
    },
    /// Judge an existing results file against a labeled dataset
    Evaluate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        results: PathBuf,
        /// Judged results JSONL (report prints either way)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Deterministic stratified train/validation split
    Split {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        val_ratio: Option<f64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Checkpoint ensembling over a recorded answer matrix
    Ensemble {
        #[command(subcommand)]
        action: EnsembleCommand,
    },
    /// Solve a math query (stdin unless --query is given)
    Mathtool {
        #[arg(long)]
        query: Option<String>,
    },
    /// Emit the tuning recipe, or build SFT/DPO/GRPO data from annotations
    ExportTraining {
        /// Annotated queries JSONL; omit to print the recipe
        #[arg(long)]
        annotated: Option<PathBuf>,
        /// sft | dpo | grpo
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Reward for a correct answer in GRPO records
        #[arg(long, default_value_t = 1.0)]
        reward_scale: f64,
    },
    /// Re-render the score report for judged results
    Report {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum EnsembleCommand {
    /// Best single checkpoint per domain, blocking non-positive domains
    Select {
        #[arg(long)]
        matrix: PathBuf,
        /// Dataset supplying each query's domain
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exhaustive subset search (global, or per domain with --per-domain)
    Search {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        max_subset_size: Option<usize>,
        #[arg(long)]
        per_domain: bool,
    },
    /// Apply a saved plan to the matrix
    Apply {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(error) = run(cli) {
        eprintln!("error: {error:#}");
        std::process::exit(1);
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(dir) = &cli.cache_dir {
        config.cache_path = Some(dir.join("responses.jsonl"));
    }
    if let Some(fixtures) = &cli.fixtures {
        config.fixture_paths = fixtures
            .split(',')
            .map(|p| PathBuf::from(p.trim()))
            .collect();
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(workers) = cli.workers {
        config.workers = workers;
    }
    if let Some(timeout) = cli.timeout_per_query {
        config.timeout_per_query_secs = Some(timeout);
    }
    if cli.echo {
        config.echo_fallback = true;
    }
    config.apply_env();
    Ok(config)
}

fn build_pipeline(config: &RunConfig) -> Result<Arc<Pipeline>> {
    config.validate()?;
    Ok(Arc::new(Pipeline::from_config(config)?))
}

/// The exact judge is gateway-free; only llm judging builds a backend.
fn build_judge(config: &RunConfig) -> Result<mmrag_core::eval::Judge> {
    match config.judge_mode {
        mmrag_core::config::JudgeModeConfig::Exact => Ok(mmrag_core::eval::Judge::exact()),
        mmrag_core::config::JudgeModeConfig::Llm => {
            config.validate()?;
            let gateway = mmrag_core::pipeline::build_gateway(config)?;
            Ok(mmrag_core::eval::Judge::llm(
                gateway,
                config.models.judge.clone(),
            ))
        }
    }
}

fn write_jsonl<T: serde::Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut file =
        std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    for item in items {
        let line = serde_json::to_string(item)?;
        writeln!(file, "{line}")?;
    }
    Ok(())
}

fn read_results(path: &Path) -> Result<Vec<ResultLine>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut results = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        results.push(
            serde_json::from_str(line)
                .with_context(|| format!("{} line {}", path.display(), line_no + 1))?,
        );
    }
    Ok(results)
}

/// Domain map (query id -> domain) from dataset tags, with a keyword
/// fallback for untagged records.
fn domain_map(dataset: &Dataset) -> BTreeMap<String, Domain> {
    dataset
        .records()
        .iter()
        .map(|record| {
            let domain = record
                .domain
                .unwrap_or_else(|| keyword_domain(&record.question));
            (query_id(&record.session_id, record.turn_index), domain)
        })
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Mathtool { query } => {
            // deterministic tool path: no gateway involved
            let text = match query {
                Some(text) => text.clone(),
                None => {
                    let mut buffer = String::new();
                    std::io::stdin().read_to_string(&mut buffer)?;
                    buffer
                }
            };
            let trimmed = text.trim();
            if trimmed.is_empty() {
                bail!("empty math query");
            }
            let answer = dispatch_rule_mode(trimmed)?;
            println!("{answer}");
            Ok(())
        }
        Command::ExportTraining {
            annotated,
            kind,
            out,
            reward_scale,
        } => export_training(
            &cli,
            annotated.as_deref(),
            kind.as_deref(),
            out.as_deref(),
            *reward_scale,
        ),
        Command::Split {
            dataset,
            val_ratio,
            out_dir,
        } => {
            let config = load_config(&cli)?;
            let dataset = Dataset::load(dataset)?;
            let ratio = val_ratio.unwrap_or(config.val_ratio);
            // sessions move as one unit so multi-turn conversations never
            // straddle the split; a session is tagged by its first turn
            let sessions: Vec<Vec<mmrag_core::dataset::DatasetRecord>> = dataset
                .sessions()
                .into_iter()
                .map(|(_, turns)| turns.into_iter().map(|(_, r)| r.clone()).collect())
                .collect();
            let (train, val) = stratified_split(
                &sessions,
                |session: &Vec<mmrag_core::dataset::DatasetRecord>| {
                    Dataset::stratum_key(&session[0])
                },
                ratio,
                config.seed,
            )?;
            std::fs::create_dir_all(out_dir)?;
            Dataset::new(train.into_iter().flatten().collect())?
                .save(out_dir.join("train.jsonl"))?;
            Dataset::new(val.into_iter().flatten().collect())?.save(out_dir.join("val.jsonl"))?;
            eprintln!(
                "split {} records at ratio {ratio} (seed {})",
                dataset.len(),
                config.seed
            );
            Ok(())
        }
        Command::Ensemble { action } => ensemble(action),
        Command::Report {
            dataset,
            results,
            csv,
        } => {
            let dataset = Dataset::load(dataset)?;
            let results = read_results(results)?;
            let report = rebuild_report(&dataset, &results)?;
            print!("{}", report.to_table());
            if let Some(path) = csv {
                std::fs::write(path, report.to_csv())?;
            }
            Ok(())
        }
        Command::Classify { dataset, out } => {
            let config = load_config(&cli)?;
            let pipeline = build_pipeline(&config)?;
            let dataset = Dataset::load(dataset)?;
            let mut lines = Vec::new();
            for record in dataset.records() {
                let query = record_to_query(record, record.history.clone().unwrap_or_default());
                let mut warnings = Vec::new();
                let domain = pipeline.classify(&query, &mut warnings);
                for warning in warnings {
                    eprintln!("warning [{}]: {warning}", query.id);
                }
                lines.push(serde_json::json!({
                    "query_id": query.id,
                    "domain": domain.to_string(),
                }));
            }
            match out {
                Some(path) => write_jsonl(path, &lines)?,
                None => {
                    for line in &lines {
                        println!("{line}");
                    }
                }
            }
            Ok(())
        }
        Command::Answer {
            question,
            image,
            domain,
        } => {
            let config = load_config(&cli)?;
            let pipeline = build_pipeline(&config)?;
            let image = match image {
                Some(location) => ImageRef::new(location.clone(), location.clone()),
                None => ImageRef::opaque("cli-image"),
            };
            let mut query = Query::new("cli#0", question.clone(), image);
            query.domain = *domain;
            let outcome = pipeline.answer_query(&query);
            for warning in &outcome.warnings {
                eprintln!("warning: {warning}");
            }
            println!("{}", outcome.answer.text);
            Ok(())
        }
        Command::Run { dataset, out } => {
            let config = load_config(&cli)?;
            let pipeline = build_pipeline(&config)?;
            let dataset = Dataset::load(dataset)?;
            let outcome = pipeline.run_batch(&dataset);
            std::fs::create_dir_all(out)?;
            write_jsonl(&out.join("results.jsonl"), &outcome.results)?;
            write_jsonl::<QuarantineLine>(&out.join("errors.jsonl"), &outcome.quarantined)?;
            if let Some(report) = &outcome.report {
                std::fs::write(out.join("report.csv"), report.to_csv())?;
                std::fs::write(out.join("report.txt"), report.to_table())?;
                print!("{}", report.to_table());
            }
            std::fs::write(
                out.join("stats.json"),
                serde_json::to_string_pretty(&outcome.stats)?,
            )?;
            for (query_id, warning) in &outcome.warnings {
                eprintln!("warning [{query_id}]: {warning}");
            }
            eprintln!(
                "answered {} records ({} quarantined) with {} completions, {} embeds",
                outcome.stats.answered,
                outcome.stats.quarantined,
                outcome.stats.completions,
                outcome.stats.embeds
            );
            Ok(())
        }
        Command::Evaluate {
            dataset,
            results,
            out,
        } => {
            let config = load_config(&cli)?;
            let judge = build_judge(&config)?;
            let dataset = Dataset::load(dataset)?;
            let mut results = read_results(results)?;

            let mut queries: BTreeMap<String, Query> = BTreeMap::new();
            for record in dataset.records() {
                let query = record_to_query(record, record.history.clone().unwrap_or_default());
                queries.insert(query.id.clone(), query);
            }
            let mut judged = Vec::new();
            for line in &mut results {
                let Some(query) = queries.get(&line.query_id) else {
                    bail!("results reference unknown query {}", line.query_id);
                };
                if query.ground_truth.is_none() {
                    continue;
                }
                let answer = Answer::from_text(line.answer.clone());
                let verdict = judge.judge(query, &answer)?;
                line.verdict = Some(verdict);
                judged.push((query.clone(), answer, verdict));
            }
            let report = score_report(&judged);
            print!("{}", report.to_table());
            if let Some(path) = out {
                write_jsonl(path, &results)?;
            }
            Ok(())
        }
    }
}

fn rebuild_report(
    dataset: &Dataset,
    results: &[ResultLine],
) -> Result<mmrag_core::eval::ScoreReport> {
    let mut queries: BTreeMap<String, Query> = BTreeMap::new();
    for record in dataset.records() {
        let query = record_to_query(record, Vec::new());
        queries.insert(query.id.clone(), query);
    }
    let mut judged = Vec::new();
    for line in results {
        let Some(verdict) = line.verdict else {
            continue;
        };
        let Some(query) = queries.get(&line.query_id) else {
            bail!("results reference unknown query {}", line.query_id);
        };
        judged.push((
            query.clone(),
            Answer::from_text(line.answer.clone()),
            verdict,
        ));
    }
    Ok(score_report(&judged))
}

fn ensemble(action: &EnsembleCommand) -> Result<()> {
    match action {
        EnsembleCommand::Select {
            matrix,
            dataset,
            out,
        } => {
            let matrix = AnswerMatrix::load(matrix)?;
            let domains = domain_map(&Dataset::load(dataset)?);
            let plan = select_per_domain(&matrix, &domains)?;
            plan.save(out)?;
            eprintln!("plan covers {} domains", plan.domains().count());
            Ok(())
        }
        EnsembleCommand::Search {
            matrix,
            dataset,
            out,
            max_subset_size,
            per_domain,
        } => {
            let matrix = AnswerMatrix::load(matrix)?;
            let domains = domain_map(&Dataset::load(dataset)?);
            let oracle = MatrixVerdictOracle::new(&matrix)?;
            let outcome = search_subset(
                &matrix,
                &oracle,
                &domains,
                *max_subset_size,
                *per_domain,
                mmrag_core::ensemble::DEFAULT_OVERFIT_MARGIN,
            )?;
            outcome.plan.save(out)?;
            println!("validation refusal score: {:.4}", outcome.score);
            for warning in &outcome.warnings {
                eprintln!(
                    "overfitting warning [{}]: subset {:?} scores {:.4} vs best single {:.4}",
                    warning.scope, warning.subset, warning.subset_score, warning.best_single_score
                );
            }
            Ok(())
        }
        EnsembleCommand::Apply {
            plan,
            matrix,
            dataset,
            out,
        } => {
            let plan = EnsemblePlan::load(plan)?;
            let matrix = AnswerMatrix::load(matrix)?;
            let domains = domain_map(&Dataset::load(dataset)?);
            let mut results = Vec::new();
            for query_id in matrix.query_ids() {
                let Some(domain) = domains.get(query_id) else {
                    bail!("dataset does not cover matrix query {query_id}");
                };
                let answer = apply_plan(&plan, &matrix, query_id, *domain)?;
                results.push(ResultLine {
                    query_id: query_id.clone(),
                    answer: answer.text,
                    verdict: None,
                });
            }
            write_jsonl(out, &results)?;
            Ok(())
        }
    }
}

/// Annotated record for training-data export: a labeled query plus the
/// sampled answers used for answerability estimation and GRPO rewards.
#[derive(serde::Deserialize)]
struct AnnotatedRecord {
    query_id: String,
    question: String,
    context: String,
    #[serde(default)]
    label: Option<AnswerabilityLabel>,
    #[serde(default)]
    ground_truth: Option<String>,
    #[serde(default)]
    correct_answer: Option<String>,
    #[serde(default)]
    hallucinated_answer: Option<String>,
    #[serde(default)]
    samples: Vec<(String, Verdict)>,
}

fn export_training(
    cli: &Cli,
    annotated: Option<&Path>,
    kind: Option<&str>,
    out: Option<&Path>,
    reward_scale: f64,
) -> Result<()> {
    let Some(annotated) = annotated else {
        let text = export_training_recipe().to_key_values();
        match out {
            Some(path) => std::fs::write(path, text)?,
            None => print!("{text}"),
        }
        return Ok(());
    };
    let kind = kind.context("--kind sft|dpo|grpo is required with --annotated")?;
    let config = load_config(cli)?;

    let text = std::fs::read_to_string(annotated)
        .with_context(|| format!("reading {}", annotated.display()))?;
    let mut labeled = Vec::new();
    let mut samples_by_query = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: AnnotatedRecord = serde_json::from_str(line)
            .with_context(|| format!("{} line {}", annotated.display(), line_no + 1))?;
        let label = match record.label {
            Some(label) => label,
            None => {
                let verdicts: Vec<Verdict> = record.samples.iter().map(|(_, v)| *v).collect();
                estimate_answerability(&verdicts, config.min_correct_ratio).with_context(|| {
                    format!("record {} has neither label nor samples", record.query_id)
                })?
            }
        };
        labeled.push(LabeledQuery {
            query_id: record.query_id,
            question: record.question,
            context: record.context,
            label,
            ground_truth: record.ground_truth,
            correct_answer: record.correct_answer,
            hallucinated_answer: record.hallucinated_answer,
        });
        samples_by_query.push(record.samples);
    }

    let mut lines: Vec<String> = Vec::new();
    match kind {
        "sft" => {
            for record in build_sft_dataset(&labeled)? {
                lines.push(serde_json::to_string(&record)?);
            }
        }
        "dpo" => {
            let (records, skips) = build_dpo_dataset(&labeled)?;
            for record in records {
                lines.push(serde_json::to_string(&record)?);
            }
            if skips.count() > 0 {
                eprintln!("skipped {} records:", skips.count());
                for (query_id, reason) in &skips.skipped {
                    eprintln!("  {query_id}: {reason}");
                }
            }
        }
        "grpo" => {
            let mut samples = Vec::new();
            for (query, query_samples) in labeled.iter().zip(&samples_by_query) {
                for (answer, verdict) in query_samples {
                    samples.push((query.clone(), answer.clone(), *verdict));
                }
            }
            for record in build_grpo_dataset(&samples, reward_scale)? {
                lines.push(serde_json::to_string(&record)?);
            }
        }
        other => bail!("unknown dataset kind {other:?}; use sft, dpo or grpo"),
    }
    let mut body = lines.join("\n");
    if !body.is_empty() {
        body.push('\n');
    }
    match out {
        Some(path) => std::fs::write(path, body)?,
        None => print!("{body}"),
    }
    Ok(())
}
