//! Snippet execution, runtime data collection, and fix classification.

pub mod interpreter;
pub mod protocol;
pub mod transcript;

use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use interpreter::{ExecMode, ExecRequest, Interpreter, RawExecution, SubprocessInterpreter};
pub use transcript::{ExecTranscript, RecordingInterpreter, ReplayInterpreter};

use crate::domain::{DataInfo, Expectation, OutputCheck, OutputCheckMode, ProbeTarget, SnippetRecord};

pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;

/// Error type reported when a non-zero exit leaves no parseable traceback.
pub const UNKNOWN_ERROR_TYPE: &str = "NonZeroExit";

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum RuntimeError {
    #[error("INTERPRETER_NOT_FOUND: cannot start `{0}`")]
    InterpreterNotFound(String),
    #[error("WORKSPACE_IO: {0}")]
    WorkspaceIo(String),
    #[error("SHIM_INSTRUMENTATION_FAILED: {0}")]
    ShimInstrumentationFailed(String),
    #[error("SHIM_PROTOCOL: {0}")]
    ShimProtocol(String),
    #[error("TIMEOUT: probe run exceeded {0} ms")]
    Timeout(u64),
    #[error("REPLAY_MISS: no recorded execution for request {key}")]
    ReplayMiss { key: String },
    #[error("TRANSCRIPT: {0}")]
    Transcript(String),
    #[error("INVALID_REQUEST: {0}")]
    InvalidRequest(String),
}

impl RuntimeError {
    pub fn code(&self) -> &'static str {
        match self {
            RuntimeError::InterpreterNotFound(_) => "INTERPRETER_NOT_FOUND",
            RuntimeError::WorkspaceIo(_) => "WORKSPACE_IO",
            RuntimeError::ShimInstrumentationFailed(_) => "SHIM_INSTRUMENTATION_FAILED",
            RuntimeError::ShimProtocol(_) => "SHIM_PROTOCOL",
            RuntimeError::Timeout(_) => "TIMEOUT",
            RuntimeError::ReplayMiss { .. } => "REPLAY_MISS",
            RuntimeError::Transcript(_) => "TRANSCRIPT",
            RuntimeError::InvalidRequest(_) => "INVALID_REQUEST",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ExecStatus {
    Ok,
    Error,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub status: ExecStatus,
    pub stdout: String,
    pub stderr: String,
    pub error_type: Option<String>,
    pub duration_ms: u64,
}

impl ExecutionOutcome {
    pub fn from_raw(raw: RawExecution) -> Self {
        let (status, error_type) = if raw.timed_out {
            (ExecStatus::Timeout, None)
        } else if raw.exit_code == Some(0) {
            (ExecStatus::Ok, None)
        } else {
            let ty = parse_error_type(&raw.stderr).unwrap_or_else(|| UNKNOWN_ERROR_TYPE.to_string());
            (ExecStatus::Error, Some(ty))
        };
        ExecutionOutcome {
            status,
            stdout: raw.stdout,
            stderr: raw.stderr,
            error_type,
            duration_ms: raw.duration_ms,
        }
    }
}

fn exception_line(line: &str) -> Option<String> {
    let token = line.split(':').next()?.trim_end();
    let valid = !token.is_empty()
        && token
            .split('.')
            .all(|part| {
                let mut chars = part.chars();
                chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                    && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
            });
    let shaped = line.len() == token.len() || line[token.len()..].starts_with(':');
    (valid && shaped).then(|| token.to_string())
}

/// The exception class from the last traceback in `stderr`.
pub fn parse_error_type(stderr: &str) -> Option<String> {
    let lines: Vec<&str> = stderr.lines().collect();
    if let Some(tb) = lines
        .iter()
        .rposition(|l| l.starts_with("Traceback (most recent call last)"))
    {
        for line in &lines[tb + 1..] {
            if line.starts_with(' ') || line.starts_with('\t') || line.trim().is_empty() {
                continue;
            }
            if let Some(t) = exception_line(line) {
                return Some(t);
            }
        }
    }
    // Without a traceback marker, only accept an `Name: message` line or a
    // conventionally named exception.
    lines
        .iter()
        .rev()
        .find(|l| !l.trim().is_empty())
        .and_then(|l| {
            let t = exception_line(l)?;
            let named = ["Error", "Exception", "Interrupt", "Exit"]
                .iter()
                .any(|s| t.ends_with(s));
            (l.contains(':') || named).then_some(t)
        })
}

fn request(
    mode: ExecMode,
    program: &str,
    data_files: &[PathBuf],
    timeout_ms: u64,
) -> Result<ExecRequest, RuntimeError> {
    if timeout_ms == 0 {
        return Err(RuntimeError::InvalidRequest("timeout_ms must be positive".into()));
    }
    Ok(ExecRequest {
        mode,
        program: program.to_string(),
        data_files: data_files.to_vec(),
        timeout: Duration::from_millis(timeout_ms),
    })
}

/// Runs a snippet in a fresh workspace containing `data_files`.
pub fn run_snippet(
    interpreter: &dyn Interpreter,
    snippet_text: &str,
    data_files: &[PathBuf],
    timeout_ms: u64,
) -> Result<ExecutionOutcome, RuntimeError> {
    let req = request(ExecMode::Plain, snippet_text, data_files, timeout_ms)?;
    Ok(ExecutionOutcome::from_raw(interpreter.execute(&req)?))
}

/// Runs the record's snippet under the probe shim and parses its records.
///
/// Records emitted before a run-time failure are still returned.
pub fn collect_data_info(
    interpreter: &dyn Interpreter,
    record: &SnippetRecord,
    targets: &[ProbeTarget],
    timeout_ms: u64,
) -> Result<Vec<DataInfo>, RuntimeError> {
    if targets.is_empty() {
        return Err(RuntimeError::InvalidRequest("no probe targets".into()));
    }
    let req = request(
        ExecMode::Probe {
            probes: targets.to_vec(),
        },
        &record.source,
        &record.resolved_data_files(),
        timeout_ms,
    )?;
    let raw = interpreter.execute(&req)?;
    if raw.timed_out {
        return Err(RuntimeError::Timeout(timeout_ms));
    }
    match raw.exit_code {
        Some(protocol::EXIT_INSTRUMENTATION) => {
            let msg = raw.stderr.trim();
            Err(RuntimeError::ShimInstrumentationFailed(if msg.is_empty() {
                "probe shim reported an instrumentation failure".into()
            } else {
                msg.to_string()
            }))
        }
        Some(code @ (protocol::EXIT_CLEAN | protocol::EXIT_SNIPPET_RAISED)) => {
            let infos =
                protocol::parse_probe_output(&raw.stdout).map_err(RuntimeError::ShimProtocol)?;
            if code == protocol::EXIT_CLEAN && infos.len() != targets.len() {
                return Err(RuntimeError::ShimProtocol(format!(
                    "clean run emitted {} records for {} probes",
                    infos.len(),
                    targets.len()
                )));
            }
            if let Some(stray) = infos.iter().find(|i| !targets.contains(&i.target)) {
                return Err(RuntimeError::ShimProtocol(format!(
                    "record for unrequested target {}",
                    stray.target
                )));
            }
            Ok(infos)
        }
        other => Err(RuntimeError::ShimProtocol(format!(
            "unexpected shim exit status {other:?}: {}",
            raw.stderr.trim()
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FixClassification {
    Fixed,
    StillBroken,
    NewError,
    PatchApplyFailed,
    Timeout,
    NotAttempted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixOutcome {
    pub classification: FixClassification,
    pub evidence: String,
}

/// Decides whether an output check passes on a run's stdout.
pub trait OutputJudge {
    fn passes(&self, check: &OutputCheck, stdout: &str) -> bool;
}

/// Handles the substring modes; a checker script never passes here.
#[derive(Debug, Clone, Copy, Default)]
pub struct SubstringJudge;

impl OutputJudge for SubstringJudge {
    fn passes(&self, check: &OutputCheck, stdout: &str) -> bool {
        match check.mode {
            OutputCheckMode::StdoutContains => stdout.contains(&check.value),
            OutputCheckMode::StdoutNotContains => !stdout.contains(&check.value),
            OutputCheckMode::CheckerScript => false,
        }
    }
}

/// Runs checker scripts through an interpreter, delegating substring modes.
pub struct ScriptJudge<'a> {
    pub interpreter: &'a dyn Interpreter,
    pub record: &'a SnippetRecord,
    pub timeout_ms: u64,
}

impl OutputJudge for ScriptJudge<'_> {
    fn passes(&self, check: &OutputCheck, stdout: &str) -> bool {
        if check.mode != OutputCheckMode::CheckerScript {
            return SubstringJudge.passes(check, stdout);
        }
        let Ok(program) = std::fs::read_to_string(self.record.resolve(&check.value)) else {
            return false;
        };
        let Ok(req) = request(
            ExecMode::Checker {
                input: stdout.to_string(),
            },
            &program,
            &self.record.resolved_data_files(),
            self.timeout_ms,
        ) else {
            return false;
        };
        matches!(
            self.interpreter.execute(&req),
            Ok(RawExecution {
                exit_code: Some(0),
                timed_out: false,
                ..
            })
        )
    }
}

fn class_matches(observed: &str, expected: &str) -> bool {
    observed == expected
        || observed.ends_with(&format!(".{expected}"))
        || expected.ends_with(&format!(".{observed}"))
}

/// Classifies a patch attempt. Pure given the judge.
pub fn classify_fix(
    original: &ExecutionOutcome,
    apply_ok: bool,
    patched: Option<&ExecutionOutcome>,
    expectation: &Expectation,
    judge: &dyn OutputJudge,
) -> FixOutcome {
    use FixClassification::*;
    let out = |classification, evidence: String| FixOutcome {
        classification,
        evidence,
    };
    let before = match (&original.status, &original.error_type) {
        (ExecStatus::Error, Some(t)) => format!("original raised {t}"),
        (ExecStatus::Timeout, _) => "original timed out".to_string(),
        _ => "original ran cleanly".to_string(),
    };
    if !apply_ok {
        return out(PatchApplyFailed, "patch did not apply".into());
    }
    let Some(patched) = patched else {
        return out(NotAttempted, "patched snippet was not executed".into());
    };
    let check = expectation
        .output_check
        .as_ref()
        .map(|c| (c, judge.passes(c, &patched.stdout)));
    match patched.status {
        ExecStatus::Timeout => out(Timeout, format!("{before}; patched run timed out")),
        ExecStatus::Ok => match check {
            Some((c, false)) => out(
                StillBroken,
                format!("{before}; patched run is clean but output check {:?} failed", c.mode),
            ),
            _ => out(Fixed, format!("{before}; patched run is clean")),
        },
        ExecStatus::Error => {
            let ty = patched.error_type.as_deref().unwrap_or(UNKNOWN_ERROR_TYPE);
            match &expectation.error_signature {
                Some(sig) => {
                    let same_class = class_matches(ty, &sig.exception_class);
                    let same_message = sig
                        .message_substring
                        .as_ref()
                        .map_or(true, |m| patched.stderr.contains(m.as_str()));
                    if same_class && same_message {
                        out(StillBroken, format!("{before}; patched run still raises {ty}"))
                    } else {
                        out(NewError, format!("{before}; patched run raises {ty} instead"))
                    }
                }
                None => out(NewError, format!("{before}; patched run raises {ty}")),
            }
        }
    }
}
