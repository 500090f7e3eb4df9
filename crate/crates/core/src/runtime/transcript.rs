//! Recording and replaying interpreter interactions.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::interpreter::{ExecMode, ExecRequest, Interpreter, RawExecution};
use super::RuntimeError;
use crate::digest::sha256_hex;

pub const EXEC_TRANSCRIPT_FORMAT: &str = "dschecker-exec-transcript";
pub const EXEC_TRANSCRIPT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecEntry {
    pub key: String,
    /// Free-form note for people reading the file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub mode: ExecMode,
    pub program_sha256: String,
    pub result: RawExecution,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecTranscript {
    pub format: String,
    pub version: u32,
    pub entries: Vec<ExecEntry>,
}

impl Default for ExecTranscript {
    fn default() -> Self {
        ExecTranscript {
            format: EXEC_TRANSCRIPT_FORMAT.into(),
            version: EXEC_TRANSCRIPT_VERSION,
            entries: Vec::new(),
        }
    }
}

impl ExecTranscript {
    pub fn load(path: &Path) -> Result<Self, RuntimeError> {
        let text = fs::read_to_string(path)
            .map_err(|e| RuntimeError::Transcript(format!("{}: {e}", path.display())))?;
        let t: ExecTranscript = serde_json::from_str(&text)
            .map_err(|e| RuntimeError::Transcript(format!("{}: {e}", path.display())))?;
        if t.format != EXEC_TRANSCRIPT_FORMAT || t.version != EXEC_TRANSCRIPT_VERSION {
            return Err(RuntimeError::Transcript(format!(
                "{}: expected {EXEC_TRANSCRIPT_FORMAT} v{EXEC_TRANSCRIPT_VERSION}, found {} v{}",
                path.display(),
                t.format,
                t.version
            )));
        }
        Ok(t)
    }

    /// Loads and merges several transcripts; later files win on key clashes.
    pub fn load_all<P: AsRef<Path>>(paths: &[P]) -> Result<Self, RuntimeError> {
        let mut merged = BTreeMap::new();
        for p in paths {
            for e in Self::load(p.as_ref())?.entries {
                merged.insert(e.key.clone(), e);
            }
        }
        Ok(ExecTranscript {
            entries: merged.into_values().collect(),
            ..Default::default()
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), RuntimeError> {
        let text = serde_json::to_string_pretty(self).expect("transcript serializes");
        fs::write(path, text + "\n")
            .map_err(|e| RuntimeError::Transcript(format!("{}: {e}", path.display())))
    }
}

/// Answers requests from a transcript; never starts a process.
#[derive(Debug, Clone)]
pub struct ReplayInterpreter {
    results: BTreeMap<String, RawExecution>,
}

impl ReplayInterpreter {
    pub fn new(transcript: ExecTranscript) -> Self {
        ReplayInterpreter {
            results: transcript
                .entries
                .into_iter()
                .map(|e| (e.key, e.result))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.results.len()
    }

    pub fn is_empty(&self) -> bool {
        self.results.is_empty()
    }
}

impl Interpreter for ReplayInterpreter {
    fn execute(&self, request: &ExecRequest) -> Result<RawExecution, RuntimeError> {
        let key = request.key()?;
        self.results
            .get(&key)
            .cloned()
            .ok_or(RuntimeError::ReplayMiss { key })
    }
}

/// Forwards to another interpreter and keeps every exchange.
pub struct RecordingInterpreter {
    inner: Arc<dyn Interpreter>,
    entries: Mutex<BTreeMap<String, ExecEntry>>,
}

impl RecordingInterpreter {
    pub fn new(inner: Arc<dyn Interpreter>) -> Self {
        RecordingInterpreter {
            inner,
            entries: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn transcript(&self) -> ExecTranscript {
        ExecTranscript {
            entries: self
                .entries
                .lock()
                .expect("recording lock")
                .values()
                .cloned()
                .collect(),
            ..Default::default()
        }
    }
}

impl Interpreter for RecordingInterpreter {
    fn execute(&self, request: &ExecRequest) -> Result<RawExecution, RuntimeError> {
        let key = request.key()?;
        let result = self.inner.execute(request)?;
        self.entries.lock().expect("recording lock").insert(
            key.clone(),
            ExecEntry {
                key,
                label: None,
                mode: request.mode.clone(),
                program_sha256: sha256_hex(&request.program),
                result: result.clone(),
            },
        );
        Ok(result)
    }
}
