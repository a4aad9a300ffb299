//! Checkpoint ensembling: equivalence clustering, majority selection,
//! per-domain checkpoint selection with blocking, and optimal subset
//! search.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use crate::eval::refusal_score;
use crate::gateway::{GatewayError, ModelGateway, ModelRequest};
use crate::normalize::normalize_answer;
use crate::types::{Answer, Domain, Verdict};

#[derive(Clone, Debug, thiserror::Error)]
pub enum EnsembleError {
    #[error("cell ({checkpoint_id}, {query_id}) has no verdict")]
    MissingVerdicts {
        checkpoint_id: String,
        query_id: String,
    },
    #[error("pool of {size} checkpoints is too large to enumerate without max_subset_size")]
    PoolTooLarge { size: usize },
    #[error("plan does not cover domain {0}")]
    UnknownDomainInPlan(Domain),
    #[error("unknown checkpoint {0}")]
    UnknownCheckpoint(String),
    #[error("unknown query {0}")]
    UnknownQuery(String),
    #[error("invalid answer matrix: {0}")]
    Matrix(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// One recorded cell: a checkpoint's answer (and optional judged verdict)
/// for one validation query. This is also the matrix file line format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub checkpoint_id: String,
    pub query_id: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
}

/// Checkpoints x queries answer grid; fully populated by construction.
#[derive(Clone, Debug)]
pub struct AnswerMatrix {
    checkpoint_ids: Vec<String>,
    query_ids: Vec<String>,
    answers: Vec<Vec<Answer>>,           // [checkpoint][query]
    verdicts: Vec<Vec<Option<Verdict>>>, // same shape
}

impl AnswerMatrix {
    pub fn from_records(records: Vec<MatrixRecord>) -> Result<Self, EnsembleError> {
        if records.is_empty() {
            return Err(EnsembleError::Matrix("no records".into()));
        }
        let mut checkpoint_ids: Vec<String> = Vec::new();
        let mut query_ids: Vec<String> = Vec::new();
        for record in &records {
            if !checkpoint_ids.contains(&record.checkpoint_id) {
                checkpoint_ids.push(record.checkpoint_id.clone());
            }
            if !query_ids.contains(&record.query_id) {
                query_ids.push(record.query_id.clone());
            }
        }
        let mut answers = vec![vec![None::<Answer>; query_ids.len()]; checkpoint_ids.len()];
        let mut verdicts = vec![vec![None::<Verdict>; query_ids.len()]; checkpoint_ids.len()];
        for record in records {
            let c = checkpoint_ids
                .iter()
                .position(|id| *id == record.checkpoint_id)
                .unwrap();
            let q = query_ids
                .iter()
                .position(|id| *id == record.query_id)
                .unwrap();
            if answers[c][q].is_some() {
                return Err(EnsembleError::Matrix(format!(
                    "duplicate cell ({}, {})",
                    record.checkpoint_id, record.query_id
                )));
            }
            answers[c][q] = Some(Answer::from_text(record.answer));
            verdicts[c][q] = record.verdict;
        }
        let mut grid = Vec::with_capacity(checkpoint_ids.len());
        for (c, row) in answers.into_iter().enumerate() {
            let mut filled = Vec::with_capacity(query_ids.len());
            for (q, cell) in row.into_iter().enumerate() {
                filled.push(cell.ok_or_else(|| {
                    EnsembleError::Matrix(format!(
                        "missing cell ({}, {})",
                        checkpoint_ids[c], query_ids[q]
                    ))
                })?);
            }
            grid.push(filled);
        }
        Ok(Self {
            checkpoint_ids,
            query_ids,
            answers: grid,
            verdicts,
        })
    }

    /// Load from JSONL, one [`MatrixRecord`] per line.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, EnsembleError> {
        let file = File::open(path.as_ref())
            .map_err(|e| EnsembleError::Matrix(format!("{}: {e}", path.as_ref().display())))?;
        let mut records = Vec::new();
        for (line_no, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| EnsembleError::Matrix(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(
                serde_json::from_str(&line)
                    .map_err(|e| EnsembleError::Matrix(format!("line {}: {e}", line_no + 1)))?,
            );
        }
        Self::from_records(records)
    }

    pub fn checkpoint_ids(&self) -> &[String] {
        &self.checkpoint_ids
    }

    pub fn query_ids(&self) -> &[String] {
        &self.query_ids
    }

    pub fn answer(&self, checkpoint: usize, query: usize) -> &Answer {
        &self.answers[checkpoint][query]
    }

    pub fn verdict(&self, checkpoint: usize, query: usize) -> Option<Verdict> {
        self.verdicts[checkpoint][query]
    }

    pub fn checkpoint_index(&self, id: &str) -> Result<usize, EnsembleError> {
        self.checkpoint_ids
            .iter()
            .position(|c| c == id)
            .ok_or_else(|| EnsembleError::UnknownCheckpoint(id.to_string()))
    }

    pub fn query_index(&self, id: &str) -> Result<usize, EnsembleError> {
        self.query_ids
            .iter()
            .position(|q| q == id)
            .ok_or_else(|| EnsembleError::UnknownQuery(id.to_string()))
    }
}

/// Group answers by the transitive closure of a pairwise equivalence
/// predicate (union-find). Refusals never enter any cluster. Clusters are
/// ordered by their earliest member; members stay in input order.
pub fn cluster_answers_with<E>(
    answers: &[Answer],
    mut equivalent: impl FnMut(&Answer, &Answer) -> Result<bool, E>,
) -> Result<Vec<Vec<usize>>, E> {
    let members: Vec<usize> = (0..answers.len())
        .filter(|&i| !answers[i].is_refusal())
        .collect();

    // union-find over positions in `members`
    let mut parent: Vec<usize> = (0..members.len()).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        if parent[x] != x {
            let root = find(parent, parent[x]);
            parent[x] = root;
        }
        parent[x]
    }
    for i in 0..members.len() {
        for j in (i + 1)..members.len() {
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
            if ri != rj && equivalent(&answers[members[i]], &answers[members[j]])? {
                let (lo, hi) = if ri < rj { (ri, rj) } else { (rj, ri) };
                parent[hi] = lo;
            }
        }
    }

    let mut clusters: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (pos, &index) in members.iter().enumerate() {
        let root = find(&mut parent, pos);
        clusters.entry(root).or_default().push(index);
    }
    let mut out: Vec<Vec<usize>> = clusters.into_values().collect();
    out.sort_by_key(|cluster| cluster[0]);
    Ok(out)
}

/// Default equivalence: equality of normalized answer text.
pub fn cluster_answers(answers: &[Answer]) -> Vec<Vec<usize>> {
    cluster_answers_with(answers, |a, b| {
        Ok::<bool, std::convert::Infallible>(normalize_answer(&a.text) == normalize_answer(&b.text))
    })
    .expect("infallible predicate")
}

/// Judge-based equivalence through the gateway (opt-in; costs one model
/// call per compared pair). Responses are parsed like the judge's:
/// leading "true" means equivalent.
pub fn llm_equivalence(
    gateway: Arc<ModelGateway>,
    model_id: impl Into<String>,
) -> impl FnMut(&Answer, &Answer) -> Result<bool, GatewayError> {
    let model_id = model_id.into();
    move |a: &Answer, b: &Answer| {
        let prompt = format!(
            "Do these two answers to the same question mean the same thing?\nAnswer A: {}\nAnswer B: {}\nOutput only 'true' or 'false'.",
            a.text, b.text
        );
        let response = gateway.complete(&ModelRequest::text(&model_id, prompt))?;
        Ok(response.text.trim().to_lowercase().starts_with("true"))
    }
}

/// Majority vote under normalized-equality clustering: the largest
/// cluster's earliest-submitted member wins; a size tie between leading
/// clusters, or no clusters at all, abstains.
pub fn majority_select(answers: &[Answer]) -> Answer {
    let clusters = cluster_answers(answers);
    let Some(best_size) = clusters.iter().map(Vec::len).max() else {
        return Answer::refusal();
    };
    let leaders: Vec<&Vec<usize>> = clusters.iter().filter(|c| c.len() == best_size).collect();
    if leaders.len() != 1 {
        // under the +1/0/-1 metric, abstaining weakly dominates a coin flip
        return Answer::refusal();
    }
    answers[leaders[0][0]].clone()
}

/// What a plan does on one domain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DomainAction {
    Blocked,
    Subset(Vec<String>),
}

/// Per-domain ensemble decisions.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct EnsemblePlan {
    actions: BTreeMap<Domain, DomainAction>,
}

#[derive(Serialize, Deserialize)]
struct PlanLine {
    domain: Domain,
    action: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    checkpoints: Vec<String>,
}

impl EnsemblePlan {
    pub fn set(&mut self, domain: Domain, action: DomainAction) {
        self.actions.insert(domain, action);
    }

    pub fn action(&self, domain: Domain) -> Option<&DomainAction> {
        self.actions.get(&domain)
    }

    pub fn domains(&self) -> impl Iterator<Item = (&Domain, &DomainAction)> {
        self.actions.iter()
    }

    /// Serialize as JSONL: `{"domain", "action": "block"|"subset",
    /// "checkpoints": [..]}` per line.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EnsembleError> {
        let mut file = File::create(path.as_ref())
            .map_err(|e| EnsembleError::Matrix(format!("{}: {e}", path.as_ref().display())))?;
        for (domain, action) in &self.actions {
            let line = match action {
                DomainAction::Blocked => PlanLine {
                    domain: *domain,
                    action: "block".into(),
                    checkpoints: Vec::new(),
                },
                DomainAction::Subset(ids) => PlanLine {
                    domain: *domain,
                    action: "subset".into(),
                    checkpoints: ids.clone(),
                },
            };
            let serialized = serde_json::to_string(&line).expect("plan line serializes");
            writeln!(file, "{serialized}").map_err(|e| EnsembleError::Matrix(e.to_string()))?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EnsembleError> {
        let file = File::open(path.as_ref())
            .map_err(|e| EnsembleError::Matrix(format!("{}: {e}", path.as_ref().display())))?;
        let mut plan = Self::default();
        for (line_no, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| EnsembleError::Matrix(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: PlanLine = serde_json::from_str(&line)
                .map_err(|e| EnsembleError::Matrix(format!("line {}: {e}", line_no + 1)))?;
            let action = match parsed.action.as_str() {
                "block" => DomainAction::Blocked,
                "subset" => {
                    if parsed.checkpoints.is_empty() {
                        return Err(EnsembleError::Matrix(format!(
                            "line {}: subset with no checkpoints",
                            line_no + 1
                        )));
                    }
                    DomainAction::Subset(parsed.checkpoints)
                }
                other => {
                    return Err(EnsembleError::Matrix(format!(
                        "line {}: unknown action {other:?}",
                        line_no + 1
                    )))
                }
            };
            plan.actions.insert(parsed.domain, action);
        }
        Ok(plan)
    }
}

/// Verdict source for ensembled answers.
pub trait VerdictOracle {
    fn verdict(&self, query_id: &str, answer: &Answer) -> Verdict;
}

/// Oracle derived from the matrix's own judged cells: a refusal is Missing;
/// any other answer takes the verdict of the first checkpoint whose answer
/// normalizes to the same text. Construction fails unless every non-refusal
/// cell is judged.
pub struct MatrixVerdictOracle<'a> {
    by_query: HashMap<&'a str, Vec<(String, Verdict)>>,
}

impl<'a> MatrixVerdictOracle<'a> {
    pub fn new(matrix: &'a AnswerMatrix) -> Result<Self, EnsembleError> {
        let mut by_query: HashMap<&str, Vec<(String, Verdict)>> = HashMap::new();
        for (q, query_id) in matrix.query_ids().iter().enumerate() {
            let mut entries = Vec::new();
            for (c, checkpoint_id) in matrix.checkpoint_ids().iter().enumerate() {
                let answer = matrix.answer(c, q);
                if answer.is_refusal() {
                    continue;
                }
                let verdict =
                    matrix
                        .verdict(c, q)
                        .ok_or_else(|| EnsembleError::MissingVerdicts {
                            checkpoint_id: checkpoint_id.clone(),
                            query_id: query_id.clone(),
                        })?;
                entries.push((normalize_answer(&answer.text), verdict));
            }
            by_query.insert(query_id.as_str(), entries);
        }
        Ok(Self { by_query })
    }
}

impl VerdictOracle for MatrixVerdictOracle<'_> {
    fn verdict(&self, query_id: &str, answer: &Answer) -> Verdict {
        if answer.is_refusal() {
            return Verdict::Missing;
        }
        let normalized = normalize_answer(&answer.text);
        self.by_query
            .get(query_id)
            .and_then(|entries| {
                entries
                    .iter()
                    .find(|(text, _)| *text == normalized)
                    .map(|(_, v)| *v)
            })
            // an answer no checkpoint produced cannot be validated; since
            // ensembling only returns recorded answers, this is unreachable
            // for plans over this matrix
            .unwrap_or(Verdict::Missing)
    }
}

/// Pick, per domain, the single checkpoint with the best refusal score over
/// that domain's validation queries (ties to the earlier checkpoint); if
/// even the best is non-positive, block the domain.
pub fn select_per_domain(
    matrix: &AnswerMatrix,
    query_domains: &BTreeMap<String, Domain>,
) -> Result<EnsemblePlan, EnsembleError> {
    let groups = group_queries_by_domain(matrix, query_domains)?;
    let mut plan = EnsemblePlan::default();
    for (domain, query_indices) in groups {
        let mut best: Option<(usize, f64)> = None;
        for c in 0..matrix.checkpoint_ids().len() {
            let mut verdicts = Vec::with_capacity(query_indices.len());
            for &q in &query_indices {
                // a refusal is Missing by definition, no judged cell needed
                let verdict = match matrix.verdict(c, q) {
                    Some(verdict) => verdict,
                    None if matrix.answer(c, q).is_refusal() => Verdict::Missing,
                    None => {
                        return Err(EnsembleError::MissingVerdicts {
                            checkpoint_id: matrix.checkpoint_ids()[c].clone(),
                            query_id: matrix.query_ids()[q].clone(),
                        })
                    }
                };
                verdicts.push(verdict);
            }
            let score = refusal_score(&verdicts).expect("non-empty domain group");
            let improved = match best {
                None => true,
                Some((_, best_score)) => score > best_score,
            };
            if improved {
                best = Some((c, score));
            }
        }
        let (winner, score) = best.expect("at least one checkpoint");
        let action = if score > 0.0 {
            DomainAction::Subset(vec![matrix.checkpoint_ids()[winner].clone()])
        } else {
            DomainAction::Blocked
        };
        plan.set(domain, action);
    }
    Ok(plan)
}

fn group_queries_by_domain(
    matrix: &AnswerMatrix,
    query_domains: &BTreeMap<String, Domain>,
) -> Result<BTreeMap<Domain, Vec<usize>>, EnsembleError> {
    let mut groups: BTreeMap<Domain, Vec<usize>> = BTreeMap::new();
    for (q, query_id) in matrix.query_ids().iter().enumerate() {
        let domain = query_domains
            .get(query_id)
            .copied()
            .ok_or_else(|| EnsembleError::UnknownQuery(query_id.clone()))?;
        groups.entry(domain).or_default().push(q);
    }
    Ok(groups)
}

/// A winning subset whose validation score beats the best single checkpoint
/// by more than the configured margin; a strong overfitting signal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverfitWarning {
    pub scope: String,
    pub subset: Vec<String>,
    pub subset_score: f64,
    pub best_single_score: f64,
    pub margin: f64,
}

/// Default margin for the overfitting warning.
pub const DEFAULT_OVERFIT_MARGIN: f64 = 0.15;

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub plan: EnsemblePlan,
    /// Validation refusal score of the plan over all queries.
    pub score: f64,
    pub warnings: Vec<OverfitWarning>,
}

/// Enumerate non-empty checkpoint subsets (up to `max_subset_size` when
/// given) in lexicographic index order and keep the refusal-score argmax;
/// lexicographic enumeration plus strict improvement makes ties resolve to
/// the lexicographically smallest subset.
///
/// With `per_domain` set, the search runs independently per domain (the
/// mixed ensemble) and a domain whose best subset still scores <= 0 is
/// blocked; the global search never blocks.
pub fn search_subset(
    matrix: &AnswerMatrix,
    oracle: &dyn VerdictOracle,
    query_domains: &BTreeMap<String, Domain>,
    max_subset_size: Option<usize>,
    per_domain: bool,
    overfit_margin: f64,
) -> Result<SearchOutcome, EnsembleError> {
    let n = matrix.checkpoint_ids().len();
    if n > 20 && max_subset_size.is_none() {
        return Err(EnsembleError::PoolTooLarge { size: n });
    }
    let limit = max_subset_size.unwrap_or(n).max(1);
    let subsets = enumerate_subsets(n, limit);
    let groups = group_queries_by_domain(matrix, query_domains)?;

    let mut plan = EnsemblePlan::default();
    let mut warnings = Vec::new();

    if per_domain {
        for (domain, query_indices) in &groups {
            let (best_subset, best_score) = argmax_subset(matrix, oracle, &subsets, query_indices)?;
            let best_single = best_singleton_score(matrix, oracle, &subsets, query_indices)?;
            if best_score > best_single + overfit_margin {
                warnings.push(OverfitWarning {
                    scope: domain.as_str().to_string(),
                    subset: ids_of(matrix, &best_subset),
                    subset_score: best_score,
                    best_single_score: best_single,
                    margin: overfit_margin,
                });
            }
            let action = if best_score > 0.0 {
                DomainAction::Subset(ids_of(matrix, &best_subset))
            } else {
                DomainAction::Blocked
            };
            plan.set(*domain, action);
        }
    } else {
        let all_queries: Vec<usize> = (0..matrix.query_ids().len()).collect();
        let (best_subset, best_score) = argmax_subset(matrix, oracle, &subsets, &all_queries)?;
        let best_single = best_singleton_score(matrix, oracle, &subsets, &all_queries)?;
        if best_score > best_single + overfit_margin {
            warnings.push(OverfitWarning {
                scope: "global".to_string(),
                subset: ids_of(matrix, &best_subset),
                subset_score: best_score,
                best_single_score: best_single,
                margin: overfit_margin,
            });
        }
        let ids = ids_of(matrix, &best_subset);
        for domain in Domain::ALL {
            plan.set(domain, DomainAction::Subset(ids.clone()));
        }
    }

    let score = score_plan(&plan, matrix, oracle, query_domains)?;
    Ok(SearchOutcome {
        plan,
        score,
        warnings,
    })
}

fn ids_of(matrix: &AnswerMatrix, subset: &[usize]) -> Vec<String> {
    subset
        .iter()
        .map(|&c| matrix.checkpoint_ids()[c].clone())
        .collect()
}

/// All non-empty subsets of 0..n with at most `max_size` elements, in
/// lexicographic order of their index sequences.
fn enumerate_subsets(n: usize, max_size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::new();
    fn extend(
        start: usize,
        n: usize,
        max_size: usize,
        current: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        for next in start..n {
            current.push(next);
            out.push(current.clone());
            if current.len() < max_size {
                extend(next + 1, n, max_size, current, out);
            }
            current.pop();
        }
    }
    extend(0, n, max_size, &mut current, &mut out);
    out
}

fn subset_verdicts(
    matrix: &AnswerMatrix,
    oracle: &dyn VerdictOracle,
    subset: &[usize],
    query_indices: &[usize],
) -> Vec<Verdict> {
    query_indices
        .iter()
        .map(|&q| {
            let answers: Vec<Answer> = subset
                .iter()
                .map(|&c| matrix.answer(c, q).clone())
                .collect();
            let chosen = majority_select(&answers);
            oracle.verdict(&matrix.query_ids()[q], &chosen)
        })
        .collect()
}

fn argmax_subset(
    matrix: &AnswerMatrix,
    oracle: &dyn VerdictOracle,
    subsets: &[Vec<usize>],
    query_indices: &[usize],
) -> Result<(Vec<usize>, f64), EnsembleError> {
    if query_indices.is_empty() {
        return Err(EnsembleError::Matrix("no queries to score".into()));
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    for subset in subsets {
        let verdicts = subset_verdicts(matrix, oracle, subset, query_indices);
        let score = refusal_score(&verdicts).expect("non-empty verdicts");
        let improved = match &best {
            None => true,
            Some((_, best_score)) => score > *best_score,
        };
        if improved {
            best = Some((subset.clone(), score));
        }
    }
    Ok(best.expect("at least one subset"))
}

fn best_singleton_score(
    matrix: &AnswerMatrix,
    oracle: &dyn VerdictOracle,
    subsets: &[Vec<usize>],
    query_indices: &[usize],
) -> Result<f64, EnsembleError> {
    let mut best = f64::NEG_INFINITY;
    for subset in subsets.iter().filter(|s| s.len() == 1) {
        let verdicts = subset_verdicts(matrix, oracle, subset, query_indices);
        best = best.max(refusal_score(&verdicts).expect("non-empty verdicts"));
    }
    Ok(best)
}

/// Validation refusal score of a plan applied to every matrix query.
pub fn score_plan(
    plan: &EnsemblePlan,
    matrix: &AnswerMatrix,
    oracle: &dyn VerdictOracle,
    query_domains: &BTreeMap<String, Domain>,
) -> Result<f64, EnsembleError> {
    let mut verdicts = Vec::with_capacity(matrix.query_ids().len());
    for query_id in matrix.query_ids() {
        let domain = query_domains
            .get(query_id)
            .copied()
            .ok_or_else(|| EnsembleError::UnknownQuery(query_id.clone()))?;
        let answer = apply_plan(plan, matrix, query_id, domain)?;
        verdicts.push(oracle.verdict(query_id, &answer));
    }
    refusal_score(&verdicts).map_err(|_| EnsembleError::Matrix("empty matrix".into()))
}

/// Answer one query under a plan: blocked domains refuse, others majority-
/// vote over the subset's recorded answers.
pub fn apply_plan(
    plan: &EnsemblePlan,
    matrix: &AnswerMatrix,
    query_id: &str,
    domain: Domain,
) -> Result<Answer, EnsembleError> {
    let action = plan
        .action(domain)
        .ok_or(EnsembleError::UnknownDomainInPlan(domain))?;
    match action {
        DomainAction::Blocked => Ok(Answer::refusal()),
        DomainAction::Subset(checkpoint_ids) => {
            let q = matrix.query_index(query_id)?;
            let mut answers = Vec::with_capacity(checkpoint_ids.len());
            for id in checkpoint_ids {
                let c = matrix.checkpoint_index(id)?;
                answers.push(matrix.answer(c, q).clone());
            }
            Ok(majority_select(&answers))
        }
    }
}
