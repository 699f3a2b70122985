//! Append-only event journal: one JSON object per line, sequence numbers
//! gapless from 1. An event is acknowledged only after the line is written
//! and synced; a failed write is truncated away so the file never holds a
//! partial line written by this process.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use famulus_core::annotation::{AnnotationTask, Decision, SuggestionId, TaskId, Timestamp};
use famulus_core::corpus::{Document, Layer, Span};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    #[serde(rename = "sequence_number")]
    pub seq: u64,
    pub timestamp: Timestamp,
    #[serde(flatten)]
    pub body: EventBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishedModel {
    pub layer: Layer,
    pub version: u64,
    /// Snapshot file, relative to the data directory.
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum EventBody {
    DocumentSubmitted {
        document: Document,
        user_id: String,
        processing_ms: f64,
    },
    TaskOpened {
        task: AnnotationTask,
    },
    SuggestionDecided {
        task_id: TaskId,
        suggestion_id: SuggestionId,
        verdict: Decision,
    },
    ManualSpanAdded {
        task_id: TaskId,
        span: Span,
    },
    TaskFinalized {
        task_id: TaskId,
    },
    ModelPublished {
        models: Vec<PublishedModel>,
        /// Number of finalized documents the models were trained on.
        training_docs: u64,
    },
}

impl EventBody {
    pub fn kind(&self) -> &'static str {
        match self {
            EventBody::DocumentSubmitted { .. } => "DocumentSubmitted",
            EventBody::TaskOpened { .. } => "TaskOpened",
            EventBody::SuggestionDecided { .. } => "SuggestionDecided",
            EventBody::ManualSpanAdded { .. } => "ManualSpanAdded",
            EventBody::TaskFinalized { .. } => "TaskFinalized",
            EventBody::ModelPublished { .. } => "ModelPublished",
        }
    }

    /// Schema checks beyond what the types enforce.
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: &str| Err(Error::InvalidEvent(format!("{}: {reason}", self.kind())));
        match self {
            EventBody::DocumentSubmitted {
                document,
                processing_ms,
                ..
            } => {
                if document.doc_id.is_empty() || document.case_id.is_empty() {
                    return fail("document ids must be non-empty");
                }
                if document.sentences.is_empty() {
                    return fail("document has no sentences");
                }
                if !processing_ms.is_finite() || *processing_ms < 0.0 {
                    return fail("processing_ms must be a non-negative number");
                }
            }
            EventBody::TaskOpened { task } => {
                if task.task_id == 0 || task.doc_id.is_empty() {
                    return fail("task id and doc id required");
                }
            }
            EventBody::ManualSpanAdded { span, .. } => {
                if span.token_start >= span.token_end {
                    return fail("empty span");
                }
            }
            EventBody::ModelPublished { models, .. } => {
                if models.is_empty() {
                    return fail("no models");
                }
            }
            EventBody::SuggestionDecided { .. } | EventBody::TaskFinalized { .. } => {}
        }
        Ok(())
    }
}

struct Writer {
    file: File,
    len: u64,
    next_seq: u64,
}

pub struct Journal {
    path: PathBuf,
    writer: Mutex<Writer>,
}

impl Journal {
    /// Opens (creating if needed) the journal and returns it with every
    /// event already on disk. Refuses a file with a malformed line or a
    /// sequence gap, naming the first bad sequence number.
    pub fn open(path: &Path) -> Result<(Journal, Vec<Event>)> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let events = if path.exists() {
            read_events(path)?
        } else {
            Vec::new()
        };
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let len = file.metadata()?.len();
        let journal = Journal {
            path: path.to_path_buf(),
            writer: Mutex::new(Writer {
                file,
                len,
                next_seq: events.len() as u64 + 1,
            }),
        };
        Ok((journal, events))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn next_seq(&self) -> u64 {
        self.writer.lock().unwrap().next_seq
    }

    /// Validates, writes and syncs one event; returns it with its sequence
    /// number. On failure the journal is unchanged.
    pub fn append(&self, timestamp: Timestamp, body: EventBody) -> Result<Event> {
        body.validate()?;
        let mut writer = self.writer.lock().unwrap();
        let event = Event {
            seq: writer.next_seq,
            timestamp,
            body,
        };
        let mut line = serde_json::to_vec(&event).map_err(std::io::Error::from)?;
        line.push(b'\n');
        let written = writer
            .file
            .write_all(&line)
            .and_then(|_| writer.file.sync_data());
        if let Err(e) = written {
            let len = writer.len;
            let _ = writer.file.set_len(len);
            return Err(e.into());
        }
        writer.len += line.len() as u64;
        writer.next_seq += 1;
        Ok(event)
    }
}

pub fn read_events(path: &Path) -> Result<Vec<Event>> {
    let file = File::open(path)?;
    let mut reader = BufReader::new(file);
    let mut events = Vec::new();
    let mut line = String::new();
    loop {
        line.clear();
        let expected = events.len() as u64 + 1;
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        let corrupt = |reason: String| Error::CorruptJournal {
            seq: expected,
            reason,
        };
        if !line.ends_with('\n') {
            return Err(corrupt("truncated final line".into()));
        }
        let event: Event =
            serde_json::from_str(line.trim_end()).map_err(|e| corrupt(e.to_string()))?;
        if event.seq != expected {
            return Err(corrupt(format!("found sequence {}", event.seq)));
        }
        events.push(event);
    }
    Ok(events)
}
