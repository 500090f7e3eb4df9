//! Single-record workflows shared by the command line and the evaluator:
//! checking a snippet with a prompt variant and validating a proposed patch.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::AgentError;
use crate::docs::{DocIndex, DocIndexError};
use crate::domain::{DataInfo, DatasetError, GenerationParams, SnippetRecord, Verdict};
use crate::gateway::{ChatMessage, Gateway, GatewayError, ModelTurn};
use crate::patch::{apply_patch_with_fuzz, PatchError};
use crate::prompt::{FewShotExemplar, PromptBundle, PromptError, PromptTemplate, PromptVariant};
use crate::runtime::{
    classify_fix, collect_data_info, run_snippet, ExecutionOutcome, FixClassification, FixOutcome,
    Interpreter, RuntimeError, ScriptJudge,
};
use crate::stats::StatsError;
use crate::verdict::{parse_verdict, MalformedVerdict};

/// Every error the library reports, with its stable code.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Patch(#[from] PatchError),
    #[error(transparent)]
    Verdict(#[from] MalformedVerdict),
    #[error(transparent)]
    Docs(#[from] DocIndexError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    /// Configuration and input problems outside the module error types.
    #[error("{code}: {message}")]
    Coded { code: &'static str, message: String },
}

impl Error {
    pub fn coded(code: &'static str, message: impl Into<String>) -> Error {
        Error::Coded {
            code,
            message: message.into(),
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            Error::Dataset(e) => e.code(),
            Error::Prompt(e) => e.code(),
            Error::Gateway(e) => e.code(),
            Error::Runtime(e) => e.code(),
            Error::Patch(e) => e.code(),
            Error::Verdict(_) => "MALFORMED_VERDICT",
            Error::Docs(e) => e.code(),
            Error::Agent(e) => e.code(),
            Error::Stats(e) => e.code(),
            Error::Coded { code, .. } => code,
        }
    }

    /// The error with agent wrappers removed.
    pub fn flatten(self) -> Error {
        match self {
            Error::Agent(AgentError::Gateway(e)) => Error::Gateway(e),
            Error::Agent(AgentError::Runtime(e)) => Error::Runtime(e),
            Error::Agent(AgentError::Prompt(e)) => Error::Prompt(e),
            Error::Agent(AgentError::Malformed(e)) => Error::Verdict(e),
            other => other,
        }
    }
}

/// Everything a prompt-mode check needs besides the record.
pub struct CheckContext<'a> {
    pub gateway: &'a Gateway,
    pub interpreter: &'a dyn Interpreter,
    pub template: &'a PromptTemplate,
    pub exemplars: &'a [FewShotExemplar],
    pub params: &'a GenerationParams,
    pub timeout_ms: u64,
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub verdict: Verdict,
    pub prompt: PromptBundle,
    pub data: Vec<DataInfo>,
}

/// Fills in directives from the documentation index when the record has none.
pub fn attach_directives(record: &mut SnippetRecord, index: &DocIndex) {
    if record.directives.is_empty() && !record.target_api.is_empty() {
        record.directives = index.directives_for(&record.target_api);
    }
}

/// Renders the prompt for `variant`, asks the model once and parses its answer.
///
/// Runtime data is collected only for variants that show it and only when the
/// record names probe targets.
pub fn check_record(
    record: &SnippetRecord,
    variant: PromptVariant,
    ctx: &CheckContext<'_>,
) -> Result<CheckResult, Error> {
    let data = if variant.includes_data() && !record.probe_targets.is_empty() {
        collect_data_info(ctx.interpreter, record, &record.probe_targets, ctx.timeout_ms)?
    } else {
        Vec::new()
    };
    let prompt = ctx.template.render(variant, record, &data, ctx.exemplars)?;
    let messages = [
        ChatMessage::system(prompt.system_text.clone()),
        ChatMessage::user(prompt.user_text.clone()),
    ];
    let text = match ctx.gateway.complete(&record.id, &messages, &[], ctx.params)? {
        ModelTurn::FinalText(t) => t,
        ModelTurn::ToolCalls(_) => {
            return Err(GatewayError::MalformedToolCall(
                "tool call in a conversation without tools".into(),
            )
            .into())
        }
    };
    Ok(CheckResult {
        verdict: parse_verdict(&text)?,
        prompt,
        data,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixReport {
    pub outcome: FixOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patched_source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original_run: Option<ExecutionOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patched_run: Option<ExecutionOutcome>,
}

/// Applies `patch` to the record's snippet, runs both versions and classifies
/// the result against the record's expectation.
pub fn validate_fix(
    record: &SnippetRecord,
    patch: &str,
    interpreter: &dyn Interpreter,
    fuzz: usize,
    timeout_ms: u64,
) -> Result<FixReport, Error> {
    let patched_source = match apply_patch_with_fuzz(&record.source, patch, fuzz) {
        Ok(text) => text,
        Err(e) => {
            return Ok(FixReport {
                outcome: FixOutcome {
                    classification: FixClassification::PatchApplyFailed,
                    evidence: e.to_string(),
                },
                patched_source: None,
                original_run: None,
                patched_run: None,
            })
        }
    };
    let data = record.resolved_data_files();
    let original = run_snippet(interpreter, &record.source, &data, timeout_ms)?;
    let patched = run_snippet(interpreter, &patched_source, &data, timeout_ms)?;
    let judge = ScriptJudge {
        interpreter,
        record,
        timeout_ms,
    };
    let outcome = classify_fix(&original, true, Some(&patched), &record.expectation, &judge);
    Ok(FixReport {
        outcome,
        patched_source: Some(patched_source),
        original_run: Some(original),
        patched_run: Some(patched),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::replay::Exchange;
    use crate::gateway::{LlmTranscript, RawTurn, ReplayProvider};
    use crate::prompt::DEFAULT_TEMPLATE;
    use crate::runtime::{ExecRequest, RawExecution};
    use std::sync::Arc;

    struct Scripted(fn(&ExecRequest) -> RawExecution);

    impl Interpreter for Scripted {
        fn execute(&self, r: &ExecRequest) -> Result<RawExecution, RuntimeError> {
            Ok((self.0)(r))
        }
    }

    fn raw(code: i32, stderr: &str) -> RawExecution {
        RawExecution {
            exit_code: Some(code),
            stdout: String::new(),
            stderr: stderr.into(),
            timed_out: false,
            duration_ms: 1,
        }
    }

    fn gateway(text: &str) -> Gateway {
        let mut t = LlmTranscript::new(None);
        t.exchanges.push(Exchange {
            request_hash: None,
            turn: RawTurn::FinalText(text.into()),
        });
        Gateway::new(Arc::new(ReplayProvider::new(vec![t]).unwrap()))
    }

    #[test]
    fn base_check_skips_probing() {
        let template = PromptTemplate::parse(DEFAULT_TEMPLATE).unwrap();
        let gw = gateway(r#"{"correct":"yes"}"#);
        let interp = Scripted(|_| panic!("no execution expected"));
        let params = GenerationParams::new("m");
        let ctx = CheckContext {
            gateway: &gw,
            interpreter: &interp,
            template: &template,
            exemplars: &[],
            params: &params,
            timeout_ms: 1000,
        };
        let mut rec = SnippetRecord::ad_hoc("r", "pandas", "x = 1\n".into());
        rec.probe_targets = vec![crate::domain::ProbeTarget::new("x", 1)];
        let out = check_record(&rec, PromptVariant::Base, &ctx).unwrap();
        assert!(!out.verdict.flags_misuse());
        assert!(out.data.is_empty());
    }

    #[test]
    fn malformed_answer_is_an_error() {
        let template = PromptTemplate::parse(DEFAULT_TEMPLATE).unwrap();
        let gw = gateway("looks fine to me");
        let interp = Scripted(|_| raw(0, ""));
        let params = GenerationParams::new("m");
        let ctx = CheckContext {
            gateway: &gw,
            interpreter: &interp,
            template: &template,
            exemplars: &[],
            params: &params,
            timeout_ms: 1000,
        };
        let rec = SnippetRecord::ad_hoc("r", "pandas", "x = 1\n".into());
        let err = check_record(&rec, PromptVariant::Base, &ctx).unwrap_err();
        assert_eq!(err.code(), "MALFORMED_VERDICT");
    }

    #[test]
    fn fix_validation_paths() {
        let rec = SnippetRecord::ad_hoc("r", "pandas", "a = 1\nb = a[0]\n".into());
        let interp = Scripted(|r| {
            if r.program.contains("a[0]") {
                raw(1, "Traceback (most recent call last):\n  File \"snippet.py\", line 2\nTypeError: no\n")
            } else {
                raw(0, "")
            }
        });
        let good = "@@ -2 +2 @@\n-b = a[0]\n+b = a\n";
        let report = validate_fix(&rec, good, &interp, 3, 1000).unwrap();
        assert_eq!(report.outcome.classification, FixClassification::Fixed);
        assert_eq!(report.patched_source.as_deref(), Some("a = 1\nb = a\n"));

        let bad = "@@ -2 +2 @@\n-c = 3\n+c = 4\n";
        let report = validate_fix(&rec, bad, &interp, 3, 1000).unwrap();
        assert_eq!(report.outcome.classification, FixClassification::PatchApplyFailed);
        assert!(report.outcome.evidence.contains("HUNK_MISMATCH"));
    }
}
