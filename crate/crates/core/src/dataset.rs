//! Dataset ingestion: one JSON object per line, one conversation turn per
//! record. Multi-turn sessions share a `session_id` with contiguous
//! `turn_index` values starting at 0.

use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::types::{ConversationTurn, Domain, ImageRef, Query};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read dataset {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("dataset line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate (session {session_id}, turn {turn_index})")]
    DuplicateTurn { session_id: String, turn_index: u32 },
    #[error("session {session_id} turns are not contiguous from 0")]
    NonContiguousTurns { session_id: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub session_id: String,
    pub turn_index: u32,
    pub question: String,
    pub image_path: String,
    /// Explicit history; when absent the harness accumulates the session's
    /// prior turns and their generated answers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history: Option<Vec<ConversationTurn>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Domain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_type: Option<String>,
}

/// Query id derived from the record position: `session#turn`.
pub fn query_id(session_id: &str, turn_index: u32) -> String {
    format!("{session_id}#{turn_index}")
}

/// Build the engine query for one record with the resolved history.
pub fn record_to_query(record: &DatasetRecord, history: Vec<ConversationTurn>) -> Query {
    Query {
        id: query_id(&record.session_id, record.turn_index),
        text: record.question.clone(),
        image: ImageRef::new(record.image_path.clone(), record.image_path.clone()),
        history,
        domain: record.domain,
        ground_truth: record.ground_truth.clone(),
    }
}

/// Validated record collection, preserving file order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    records: Vec<DatasetRecord>,
}

impl Dataset {
    pub fn new(records: Vec<DatasetRecord>) -> Result<Self, DatasetError> {
        let mut seen: HashSet<(String, u32)> = HashSet::new();
        let mut turns_per_session: HashMap<String, Vec<u32>> = HashMap::new();
        for record in &records {
            if !seen.insert((record.session_id.clone(), record.turn_index)) {
                return Err(DatasetError::DuplicateTurn {
                    session_id: record.session_id.clone(),
                    turn_index: record.turn_index,
                });
            }
            turns_per_session
                .entry(record.session_id.clone())
                .or_default()
                .push(record.turn_index);
        }
        for (session_id, mut turns) in turns_per_session {
            turns.sort_unstable();
            if turns.iter().enumerate().any(|(i, t)| *t != i as u32) {
                return Err(DatasetError::NonContiguousTurns { session_id });
            }
        }
        Ok(Self { records })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let file = File::open(path.as_ref()).map_err(|e| DatasetError::Io {
            path: path.as_ref().display().to_string(),
            reason: e.to_string(),
        })?;
        let mut records = Vec::new();
        for (line_no, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| DatasetError::Parse {
                line: line_no + 1,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(
                serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
                    line: line_no + 1,
                    message: e.to_string(),
                })?,
            );
        }
        Self::new(records)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        let mut file = File::create(path.as_ref()).map_err(|e| DatasetError::Io {
            path: path.as_ref().display().to_string(),
            reason: e.to_string(),
        })?;
        for record in &self.records {
            let line = serde_json::to_string(record).expect("record serializes");
            writeln!(file, "{line}").map_err(|e| DatasetError::Io {
                path: path.as_ref().display().to_string(),
                reason: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn records(&self) -> &[DatasetRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Sessions in order of first appearance; turns sorted inside each,
    /// paired with the record's original file position.
    pub fn sessions(&self) -> Vec<(String, Vec<(usize, &DatasetRecord)>)> {
        let mut order: Vec<String> = Vec::new();
        let mut by_session: HashMap<&str, Vec<(usize, &DatasetRecord)>> = HashMap::new();
        for (position, record) in self.records.iter().enumerate() {
            if !by_session.contains_key(record.session_id.as_str()) {
                order.push(record.session_id.clone());
            }
            by_session
                .entry(record.session_id.as_str())
                .or_default()
                .push((position, record));
        }
        order
            .into_iter()
            .map(|session_id| {
                let mut turns = by_session
                    .remove(session_id.as_str())
                    .expect("session present");
                turns.sort_by_key(|(_, r)| r.turn_index);
                (session_id, turns)
            })
            .collect()
    }

    /// Stratum key used by the splitter: (domain, question_type), each
    /// defaulting to "other"/"unspecified" when untagged.
    pub fn stratum_key(record: &DatasetRecord) -> (String, String) {
        (
            record.domain.unwrap_or(Domain::Other).as_str().to_string(),
            record
                .question_type
                .clone()
                .unwrap_or_else(|| "unspecified".to_string()),
        )
    }
}
