//! Tool-calling detection loop.
//!
//! The conversation starts from the base prompt (code and library only). The
//! model may request runtime values and API documentation through the two
//! declared tools; results go back as tool messages until it answers.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::digest::sha256_hex;
use crate::docs::DocIndex;
use crate::domain::{occurs_as_identifier, GenerationParams, ProbeTarget, SnippetRecord, Verdict};
use crate::gateway::{
    check_tool_results, default_tools, ChatMessage, Gateway, GatewayError, ModelTurn, ToolCall,
    ToolDeclaration, ToolName,
};
use crate::prompt::{PromptError, PromptTemplate, PromptVariant};
use crate::runtime::{collect_data_info, Interpreter, RuntimeError, DEFAULT_TIMEOUT_MS};
use crate::verdict::{parse_verdict, MalformedVerdict};

pub const DEFAULT_MAX_ITERATIONS: usize = 8;
const DIGEST_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentConfig {
    /// Tool-calling rounds before the model is told to answer.
    pub max_iterations: usize,
    /// Per tool execution.
    pub timeout_ms: u64,
    /// When false, at most `max_iterations` tool calls are executed in total;
    /// later calls get an error result.
    pub allow_unlimited_calls: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            max_iterations: DEFAULT_MAX_ITERATIONS,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            allow_unlimited_calls: true,
        }
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("AGENT_EXHAUSTED: no verdict after {rounds} tool rounds and the final nudge")]
    Exhausted { rounds: usize },
    #[error(transparent)]
    Malformed(#[from] MalformedVerdict),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("INVALID_CONFIG: {0}")]
    InvalidConfig(String),
}

impl AgentError {
    pub fn code(&self) -> &'static str {
        match self {
            AgentError::Exhausted { .. } => "AGENT_EXHAUSTED",
            AgentError::Malformed(_) => "MALFORMED_VERDICT",
            AgentError::Gateway(e) => e.code(),
            AgentError::Runtime(e) => e.code(),
            AgentError::Prompt(e) => e.code(),
            AgentError::InvalidConfig(_) => "INVALID_CONFIG",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallLogEntry {
    pub tool: ToolName,
    pub arguments: Value,
    /// Leading hex digits of the SHA-256 of the result text.
    pub result_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevant: Option<bool>,
    /// The call returned an error message instead of a value.
    #[serde(default)]
    pub failed: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallLog {
    pub entries: Vec<CallLogEntry>,
}

impl CallLog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, tool: ToolName) -> usize {
        self.entries.iter().filter(|e| e.tool == tool).count()
    }

    pub fn relevant_count(&self) -> usize {
        self.entries.iter().filter(|e| e.relevant == Some(true)).count()
    }

    /// Counts per tool and relevance, one line each.
    pub fn summary(&self) -> String {
        let mut out = format!("tool calls: {}\n", self.len());
        for tool in [ToolName::GetVariableInfo, ToolName::GetApiDocumentation] {
            let of: Vec<&CallLogEntry> = self.entries.iter().filter(|e| e.tool == tool).collect();
            let relevant = of.iter().filter(|e| e.relevant == Some(true)).count();
            let failed = of.iter().filter(|e| e.failed).count();
            out.push_str(&format!(
                "  {tool}: {} (relevant {relevant}, failed {failed})\n",
                of.len()
            ));
        }
        for (i, e) in self.entries.iter().enumerate() {
            let tag = match e.relevant {
                Some(true) => "relevant",
                Some(false) => "not relevant",
                None => "untagged",
            };
            out.push_str(&format!(
                "  #{} {}({}) -> {} [{tag}]\n",
                i + 1,
                e.tool,
                render_args(&e.arguments),
                e.result_digest
            ));
        }
        out
    }
}

fn render_args(args: &Value) -> String {
    match args.as_object() {
        Some(map) => map
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(", "),
        None => args.to_string(),
    }
}

#[derive(Debug, Clone)]
pub struct AgentRun {
    pub verdict: Verdict,
    pub call_log: CallLog,
    pub messages: Vec<ChatMessage>,
    pub model_turns: usize,
}

/// The shared, read-only pieces an agent run needs.
pub struct Agent<'a> {
    pub index: &'a DocIndex,
    pub gateway: &'a Gateway,
    pub interpreter: &'a dyn Interpreter,
    pub template: &'a PromptTemplate,
    pub tools: Vec<ToolDeclaration>,
}

impl<'a> Agent<'a> {
    pub fn new(
        index: &'a DocIndex,
        gateway: &'a Gateway,
        interpreter: &'a dyn Interpreter,
        template: &'a PromptTemplate,
    ) -> Self {
        Agent {
            index,
            gateway,
            interpreter,
            template,
            tools: default_tools(),
        }
    }

    pub fn run(
        &self,
        record: &SnippetRecord,
        params: &GenerationParams,
        config: &AgentConfig,
    ) -> Result<AgentRun, AgentError> {
        if config.max_iterations == 0 {
            return Err(AgentError::InvalidConfig("max_iterations must be at least 1".into()));
        }
        let base = self.template.render(PromptVariant::Base, record, &[], &[])?;
        let mut messages = vec![
            ChatMessage::system(self.template.agent_system_text(&record.library)),
            ChatMessage::user(base.user_text),
        ];
        let budget = config.max_iterations + 1;
        let mut turns = 0;
        let mut rounds = 0;
        let mut nudged = false;
        let mut reprompted = false;
        let mut log = CallLog::default();

        loop {
            turns += 1;
            let turn = self.gateway.complete(&record.id, &messages, &self.tools, params)?;
            match turn {
                ModelTurn::ToolCalls(calls) => {
                    if nudged {
                        return Err(AgentError::Exhausted { rounds });
                    }
                    messages.push(ChatMessage::assistant_tool_calls(calls.clone()));
                    for call in &calls {
                        let capped = !config.allow_unlimited_calls && log.len() >= config.max_iterations;
                        let (text, failed) = if capped {
                            ("error: the tool call limit for this review has been reached".to_string(), true)
                        } else {
                            self.dispatch(call, record, config.timeout_ms)?
                        };
                        log.entries.push(CallLogEntry {
                            tool: call.name,
                            arguments: Value::Object(call.arguments.clone()),
                            result_digest: sha256_hex(&text)[..DIGEST_LEN].to_string(),
                            relevant: Some(is_relevant(call, record)),
                            failed,
                        });
                        messages.push(ChatMessage::tool_result(&call.id, text));
                    }
                    rounds += 1;
                    if rounds >= config.max_iterations {
                        messages.push(ChatMessage::user(self.template.nudge_text()));
                        nudged = true;
                    }
                }
                ModelTurn::FinalText(text) => {
                    messages.push(ChatMessage::assistant(text.clone()));
                    match parse_verdict(&text) {
                        Ok(verdict) => {
                            check_tool_results(&messages)?;
                            return Ok(AgentRun {
                                verdict,
                                call_log: log,
                                messages,
                                model_turns: turns,
                            });
                        }
                        Err(e) if reprompted || turns >= budget => return Err(e.into()),
                        Err(e) => {
                            reprompted = true;
                            messages.push(ChatMessage::user(
                                self.template.reprompt_text(e.reason.reprompt_hint()),
                            ));
                        }
                    }
                }
            }
            if turns >= budget {
                return Err(AgentError::Exhausted { rounds });
            }
        }
    }

    /// Executes one tool call. Failures become error text for the model;
    /// only a timeout is returned as an error.
    pub fn dispatch(
        &self,
        call: &ToolCall,
        record: &SnippetRecord,
        timeout_ms: u64,
    ) -> Result<(String, bool), RuntimeError> {
        match call.name {
            ToolName::GetApiDocumentation => {
                let api = call.str_arg("api_name").unwrap_or_default();
                Ok(match self.index.lookup(api) {
                    Ok(entry) => (entry.body.clone(), false),
                    Err(e) => (format!("error: documentation for '{api}' not found ({e})"), true),
                })
            }
            ToolName::GetVariableInfo => {
                let name = call.str_arg("variable_name").unwrap_or_default();
                let line = call.int_arg("line_number").unwrap_or(0);
                if !occurs_as_identifier(&record.source, name) {
                    return Ok((format!("error: variable '{name}' does not appear in the snippet"), true));
                }
                let lines = record.line_count();
                if line < 1 || line as usize > lines {
                    return Ok((
                        format!("error: line {line} is outside the snippet (lines 1-{lines})"),
                        true,
                    ));
                }
                let target = ProbeTarget::new(name, line as usize);
                match collect_data_info(self.interpreter, record, &[target.clone()], timeout_ms) {
                    Ok(infos) => Ok(match infos.iter().find(|i| i.target == target) {
                        Some(info) => (self.template.render_data_section(info), false),
                        None => (
                            format!("error: the program stopped before line {line} was reached"),
                            true,
                        ),
                    }),
                    Err(e @ RuntimeError::Timeout(_)) => Err(e),
                    Err(e) => Ok((format!("error: could not inspect '{name}': {e}"), true)),
                }
            }
        }
    }
}

/// Whether a call asks about the API under review or one of its probe variables.
pub fn is_relevant(call: &ToolCall, record: &SnippetRecord) -> bool {
    match call.name {
        ToolName::GetApiDocumentation => call
            .str_arg("api_name")
            .is_some_and(|api| same_api(api, &record.target_api)),
        ToolName::GetVariableInfo => call
            .str_arg("variable_name")
            .is_some_and(|v| record.probe_targets.iter().any(|t| t.variable_name == v)),
    }
}

/// Equal names, or one is a dotted suffix of the other.
fn same_api(a: &str, b: &str) -> bool {
    let a = a.trim();
    let b = b.trim();
    if a.is_empty() || b.is_empty() {
        return false;
    }
    let suffix = |long: &str, short: &str| {
        long == short || long.strip_suffix(short).is_some_and(|p| p.ends_with('.'))
    };
    suffix(a, b) || suffix(b, a)
}

/// Runs one agent conversation with the default tool declarations.
pub fn run_agent(
    record: &SnippetRecord,
    index: &DocIndex,
    gateway: &Gateway,
    interpreter: &dyn Interpreter,
    template: &PromptTemplate,
    params: &GenerationParams,
    config: &AgentConfig,
) -> Result<AgentRun, AgentError> {
    Agent::new(index, gateway, interpreter, template).run(record, params, config)
}
