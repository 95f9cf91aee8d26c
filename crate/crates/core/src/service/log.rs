//! Append-only observation log (newline-delimited JSON).
//!
//! Every state change of the canonicalizer is written here before it is
//! acknowledged. On startup the log is replayed through a fresh engine and
//! every recorded outcome must be reproduced exactly.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonicalizer::{Canonicalizer, CollisionId, Observation, Outcome, Resolution, SiteId};

pub const LOG_FILE_NAME: &str = "observations.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub sequence_no: u64,
    #[serde(flatten)]
    pub event: LogEvent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum LogEvent {
    Observe {
        observation: Observation,
        outcome: Outcome,
    },
    Resolve {
        collision_id: CollisionId,
        decision: Resolution,
        site_id: SiteId,
    },
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("observation log is corrupt at sequence_no {sequence_no}: {reason}")]
    CorruptLog { sequence_no: u64, reason: String },
    #[error("recorded outcome of sequence_no {sequence_no} does not match the recomputed one")]
    OutcomeMismatch { sequence_no: u64 },
    #[error("observation log i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Rebuilds engine state from log entries, auditing every recorded outcome.
pub fn replay_log(entries: &[LogEntry]) -> Result<Canonicalizer, LogError> {
    let mut engine = Canonicalizer::new();
    for (i, entry) in entries.iter().enumerate() {
        let expected_seq = i as u64 + 1;
        if entry.sequence_no != expected_seq {
            return Err(LogError::CorruptLog {
                sequence_no: expected_seq,
                reason: format!("found sequence_no {}", entry.sequence_no),
            });
        }
        let matches = match &entry.event {
            LogEvent::Observe {
                observation,
                outcome,
            } => engine
                .register_observation(observation.clone())
                .is_ok_and(|o| &o == outcome),
            LogEvent::Resolve {
                collision_id,
                decision,
                site_id,
            } => engine
                .resolve_collision(*collision_id, decision)
                .is_ok_and(|s| &s == site_id),
        };
        if !matches {
            return Err(LogError::OutcomeMismatch {
                sequence_no: entry.sequence_no,
            });
        }
    }
    Ok(engine)
}

/// Reads all entries from `path`. A final line without its newline is a
/// write torn by a crash; it was never acknowledged and is dropped (and
/// returned as the byte length to keep).
fn read_entries(path: &Path) -> Result<(Vec<LogEntry>, Option<u64>), LogError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((Vec::new(), None)),
        Err(e) => return Err(e.into()),
    };
    let mut reader = BufReader::new(file);
    let mut entries = Vec::new();
    let mut good_len = 0u64;
    let mut line = String::new();
    loop {
        line.clear();
        let n = reader.read_line(&mut line)?;
        if n == 0 {
            return Ok((entries, None));
        }
        let sequence_no = entries.len() as u64 + 1;
        if !line.ends_with('\n') {
            return Ok((entries, Some(good_len)));
        }
        if line.trim().is_empty() {
            return Err(LogError::CorruptLog {
                sequence_no,
                reason: "blank line".into(),
            });
        }
        let entry: LogEntry =
            serde_json::from_str(line.trim_end()).map_err(|e| LogError::CorruptLog {
                sequence_no,
                reason: e.to_string(),
            })?;
        entries.push(entry);
        good_len += n as u64;
    }
}

pub struct ObservationLog {
    path: PathBuf,
    file: File,
    next_seq: u64,
}

impl ObservationLog {
    /// Opens (or creates) the log in `data_dir` and rebuilds the engine from it.
    pub fn open(data_dir: &Path) -> Result<(Self, Canonicalizer), LogError> {
        std::fs::create_dir_all(data_dir)?;
        let path = data_dir.join(LOG_FILE_NAME);
        let (entries, torn) = read_entries(&path)?;
        let engine = replay_log(&entries)?;
        if let Some(keep) = torn {
            tracing::warn!(path = %path.display(), keep, "dropping torn final log line");
            OpenOptions::new().write(true).open(&path)?.set_len(keep)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok((
            Self {
                path,
                file,
                next_seq: entries.len() as u64 + 1,
            },
            engine,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn next_sequence_no(&self) -> u64 {
        self.next_seq
    }

    pub fn append(&mut self, event: LogEvent) -> Result<LogEntry, LogError> {
        let entry = LogEntry {
            sequence_no: self.next_seq,
            event,
        };
        let mut line = serde_json::to_vec(&entry).expect("log entries serialize");
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()?;
        self.next_seq += 1;
        Ok(entry)
    }

    pub fn entries(&self) -> Result<Vec<LogEntry>, LogError> {
        Ok(read_entries(&self.path)?.0)
    }
}
