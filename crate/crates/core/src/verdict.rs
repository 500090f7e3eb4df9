//! Turning free-form model text into a [`Verdict`].

use std::fmt;

use serde_json::Value;
use thiserror::Error;

use crate::domain::{Correctness, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MalformedReason {
    NoJsonObject,
    MissingCorrect,
    InvalidCorrect,
    MissingPatch,
    MissingExplanation,
}

impl fmt::Display for MalformedReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MalformedReason::NoJsonObject => "NO_JSON_OBJECT",
            MalformedReason::MissingCorrect => "MISSING_CORRECT",
            MalformedReason::InvalidCorrect => "INVALID_CORRECT",
            MalformedReason::MissingPatch => "MISSING_PATCH",
            MalformedReason::MissingExplanation => "MISSING_EXPLANATION",
        };
        f.write_str(s)
    }
}

impl MalformedReason {
    /// Instruction sent back to the model when asking it to try again.
    pub fn reprompt_hint(&self) -> &'static str {
        match self {
            MalformedReason::NoJsonObject => "Your answer did not contain a JSON object.",
            MalformedReason::MissingCorrect => "Your JSON object is missing the \"correct\" key.",
            MalformedReason::InvalidCorrect => "The \"correct\" key must be \"yes\" or \"no\".",
            MalformedReason::MissingPatch => {
                "An answer with \"correct\": \"no\" must include a non-empty unified diff in \"patch\"."
            }
            MalformedReason::MissingExplanation => {
                "An answer with \"correct\": \"no\" must include a non-empty \"explanation\"."
            }
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("MALFORMED_VERDICT({reason})")]
pub struct MalformedVerdict {
    pub reason: MalformedReason,
}

/// Extracts the first balanced top-level JSON object from `raw` and validates
/// it against the answer contract.
pub fn parse_verdict(raw: &str) -> Result<Verdict, MalformedVerdict> {
    let malformed = |reason| MalformedVerdict { reason };
    let obj = first_json_object(raw).ok_or(malformed(MalformedReason::NoJsonObject))?;
    let correct = match obj.get("correct") {
        None => return Err(malformed(MalformedReason::MissingCorrect)),
        Some(Value::String(s)) => match s.trim().to_ascii_lowercase().as_str() {
            "yes" => Correctness::Yes,
            "no" => Correctness::No,
            _ => return Err(malformed(MalformedReason::InvalidCorrect)),
        },
        Some(Value::Bool(true)) => Correctness::Yes,
        Some(Value::Bool(false)) => Correctness::No,
        Some(_) => return Err(malformed(MalformedReason::InvalidCorrect)),
    };
    let text_field = |key: &str| {
        obj.get(key)
            .and_then(Value::as_str)
            .filter(|s| !s.trim().is_empty())
            .map(str::to_string)
    };
    match correct {
        Correctness::Yes => Ok(Verdict {
            correct,
            patch: None,
            explanation: text_field("explanation"),
            raw: raw.to_string(),
        }),
        Correctness::No => {
            let patch = text_field("patch").ok_or(malformed(MalformedReason::MissingPatch))?;
            let explanation =
                text_field("explanation").ok_or(malformed(MalformedReason::MissingExplanation))?;
            Ok(Verdict {
                correct,
                patch: Some(patch),
                explanation: Some(explanation),
                raw: raw.to_string(),
            })
        }
    }
}

/// Scans for `{`, then walks to its matching `}` honoring JSON strings, and
/// returns the first candidate that parses as an object.
fn first_json_object(text: &str) -> Option<serde_json::Map<String, Value>> {
    let bytes = text.as_bytes();
    let mut start = 0;
    while let Some(off) = text[start..].find('{') {
        let open = start + off;
        if let Some(close) = matching_brace(bytes, open) {
            if let Ok(Value::Object(map)) = serde_json::from_str(&text[open..=close]) {
                return Some(map);
            }
        }
        start = open + 1;
    }
    None
}

fn matching_brace(bytes: &[u8], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(open) {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}
