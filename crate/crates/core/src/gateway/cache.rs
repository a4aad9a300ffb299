//! Persistent response cache: one JSON object per line.
//!
//! The cache is append-only during a run. Each entry is written as a single
//! flushed line under a lock, so concurrent writers never interleave bytes;
//! a torn final line from a killed process is skipped on load.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

/// On-disk line format, shared by the cache and fixture files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheLine {
    pub key: String,
    pub response: String,
    pub model_id: String,
    pub created_unix: u64,
}

/// Read every well-formed line of a cache/fixture file.
/// Returns the entries and the number of malformed lines skipped.
pub fn read_lines(path: &Path) -> std::io::Result<(Vec<CacheLine>, usize)> {
    let file = File::open(path)?;
    let mut entries = Vec::new();
    let mut skipped = 0;
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<CacheLine>(&line) {
            Ok(entry) => entries.push(entry),
            Err(_) => skipped += 1,
        }
    }
    Ok((entries, skipped))
}

pub struct ResponseCache {
    entries: RwLock<HashMap<String, String>>,
    writer: Option<Mutex<File>>,
    skipped_on_load: usize,
}

impl ResponseCache {
    /// Cache with no persistence.
    pub fn in_memory() -> Self {
        Self {
            entries: RwLock::new(HashMap::new()),
            writer: None,
            skipped_on_load: 0,
        }
    }

    /// Cache backed by a JSONL file; existing entries are loaded, new
    /// entries appended.
    pub fn with_file(path: &Path) -> std::io::Result<Self> {
        let (mut entries, skipped) = if path.exists() {
            read_lines(path)?
        } else {
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)?;
                }
            }
            (Vec::new(), 0)
        };
        let map: HashMap<String, String> = entries.drain(..).map(|e| (e.key, e.response)).collect();
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            entries: RwLock::new(map),
            writer: Some(Mutex::new(file)),
            skipped_on_load: skipped,
        })
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.entries
            .read()
            .expect("cache read lock")
            .get(key)
            .cloned()
    }

    pub fn put(&self, key: &str, response: &str, model_id: &str) -> std::io::Result<()> {
        {
            let mut entries = self.entries.write().expect("cache write lock");
            entries.insert(key.to_string(), response.to_string());
        }
        if let Some(writer) = &self.writer {
            let line = CacheLine {
                key: key.to_string(),
                response: response.to_string(),
                model_id: model_id.to_string(),
                created_unix: SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0),
            };
            let mut serialized = serde_json::to_string(&line).expect("cache line serializes");
            serialized.push('\n');
            let mut file = writer.lock().expect("cache file lock");
            file.write_all(serialized.as_bytes())?;
            file.flush()?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache read lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn skipped_on_load(&self) -> usize {
        self.skipped_on_load
    }
}
