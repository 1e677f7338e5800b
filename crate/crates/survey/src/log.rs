//! Append-only event log. One JSON record per line, `seq` strictly
//! increasing. Every state change goes through here first.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use realtor_core::arena::ComparisonEvent;
use realtor_core::personalization::BuyerProfile;
use serde::{Deserialize, Serialize};

use crate::plan::ComparisonPlan;
use crate::quiz::Quiz;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    SessionCreated {
        seq: u64,
        session_id: String,
        buyer_id: String,
        seed: u64,
        quiz: Quiz,
    },
    ScreeningSubmitted {
        seq: u64,
        session_id: String,
        answers: BTreeMap<String, usize>,
        passed: bool,
        reason: Option<String>,
    },
    PreferencesSubmitted {
        seq: u64,
        session_id: String,
        profile: BuyerProfile,
        plan: ComparisonPlan,
    },
    ChoiceRecorded {
        seq: u64,
        session_id: String,
        item_id: usize,
        event: ComparisonEvent,
    },
}

impl LogRecord {
    pub fn seq(&self) -> u64 {
        match self {
            LogRecord::SessionCreated { seq, .. }
            | LogRecord::ScreeningSubmitted { seq, .. }
            | LogRecord::PreferencesSubmitted { seq, .. }
            | LogRecord::ChoiceRecorded { seq, .. } => *seq,
        }
    }

    pub fn session_id(&self) -> &str {
        match self {
            LogRecord::SessionCreated { session_id, .. }
            | LogRecord::ScreeningSubmitted { session_id, .. }
            | LogRecord::PreferencesSubmitted { session_id, .. }
            | LogRecord::ChoiceRecorded { session_id, .. } => session_id,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: corrupt record at line {line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

/// Reads every record; any unparsable line or out-of-order seq halts with
/// its line number.
pub fn read_log(path: &Path) -> Result<Vec<LogRecord>, LogError> {
    let io = |source| LogError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io)?;
    let mut out: Vec<LogRecord> = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let corrupt = |message: String| LogError::Corrupt {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let rec: LogRecord = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
        if let Some(prev) = out.last() {
            if rec.seq() <= prev.seq() {
                return Err(corrupt(format!(
                    "seq {} does not follow {}",
                    rec.seq(),
                    prev.seq()
                )));
            }
        }
        out.push(rec);
    }
    Ok(out)
}

/// Comparison events of a log, in append order. Accepts either a survey log
/// or a bare file of comparison events, one per line.
pub fn read_comparison_events(path: &Path) -> Result<Vec<ComparisonEvent>, LogError> {
    let io = |source| LogError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io)?;
    let mut out: Vec<ComparisonEvent> = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let corrupt = |message: String| LogError::Corrupt {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
        let event = if value.get("kind").is_some() {
            match serde_json::from_value::<LogRecord>(value).map_err(|e| corrupt(e.to_string()))? {
                LogRecord::ChoiceRecorded { event, .. } => event,
                _ => continue,
            }
        } else {
            serde_json::from_value::<ComparisonEvent>(value).map_err(|e| corrupt(e.to_string()))?
        };
        if let Some(prev) = out.last() {
            if event.seq <= prev.seq {
                return Err(corrupt(format!(
                    "seq {} does not follow {}",
                    event.seq, prev.seq
                )));
            }
        }
        out.push(event);
    }
    Ok(out)
}

/// The single writer. Each record is written with one call and flushed to
/// disk before the caller applies it.
#[derive(Debug)]
pub struct LogWriter {
    path: PathBuf,
    file: File,
}

impl LogWriter {
    pub fn open(path: &Path) -> std::io::Result<Self> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, record: &LogRecord) -> std::io::Result<()> {
        let mut line = serde_json::to_string(record).map_err(std::io::Error::other)?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.sync_data()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QualityRow {
    pub session_id: String,
    pub buyer_id: String,
    pub completed: bool,
    pub rejected: bool,
    pub attention_passed: Option<bool>,
    pub control_passed: Option<bool>,
    pub low_quality: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QualitySummary {
    pub sessions: usize,
    pub rejected: usize,
    pub completed: usize,
    pub low_quality: usize,
    pub rows: Vec<QualityRow>,
}
