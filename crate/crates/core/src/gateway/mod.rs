//! Provider-agnostic chat completion with tool declarations.
//!
//! Providers return a [`RawTurn`]; [`Gateway::complete`] validates tool calls
//! against the declared parameter schemas before the caller sees them, so a
//! replayed script and a live model are held to the same contract.

pub mod http;
pub mod replay;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::digest::json_digest;
use crate::domain::GenerationParams;

pub use http::HttpProvider;
pub use replay::{LlmTranscript, RecordingProvider, ReplayProvider};

pub const TOOLS_ASSET: &str = include_str!("../../assets/tools.json");

pub const API_KEY_ENV: &str = "DSCHECKER_API_KEY";
pub const API_BASE_ENV: &str = "DSCHECKER_API_BASE";
pub const MODEL_ENV: &str = "DSCHECKER_MODEL";

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GatewayError {
    #[error("PROVIDER_HTTP: status {status}: {body}")]
    ProviderHttp { status: u16, body: String },
    #[error("RATE_LIMITED: retry after {retry_after_s:?} s")]
    RateLimited { retry_after_s: Option<u64> },
    #[error("REPLAY_MISMATCH: conversation `{conversation}` turn {turn}: {detail}")]
    ReplayMismatch {
        conversation: String,
        turn: usize,
        detail: String,
    },
    #[error("MALFORMED_TOOL_CALL: {0}")]
    MalformedToolCall(String),
    #[error("INVALID_CONVERSATION: {0}")]
    InvalidConversation(String),
    #[error("TRANSCRIPT: {0}")]
    Transcript(String),
    #[error("PROVIDER_CONFIG: {0}")]
    ProviderConfig(String),
}

impl GatewayError {
    pub fn code(&self) -> &'static str {
        match self {
            GatewayError::ProviderHttp { .. } => "PROVIDER_HTTP",
            GatewayError::RateLimited { .. } => "RATE_LIMITED",
            GatewayError::ReplayMismatch { .. } => "REPLAY_MISMATCH",
            GatewayError::MalformedToolCall(_) => "MALFORMED_TOOL_CALL",
            GatewayError::InvalidConversation(_) => "INVALID_CONVERSATION",
            GatewayError::Transcript(_) => "TRANSCRIPT",
            GatewayError::ProviderConfig(_) => "PROVIDER_CONFIG",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Role {
    System,
    User,
    Assistant,
    ToolResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolName {
    GetVariableInfo,
    GetApiDocumentation,
}

impl ToolName {
    pub fn as_str(self) -> &'static str {
        match self {
            ToolName::GetVariableInfo => "get_variable_info",
            ToolName::GetApiDocumentation => "get_api_documentation",
        }
    }
}

impl fmt::Display for ToolName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ToolName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "get_variable_info" => Ok(ToolName::GetVariableInfo),
            "get_api_documentation" => Ok(ToolName::GetApiDocumentation),
            other => Err(format!("unknown tool `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCall {
    pub id: String,
    pub name: ToolName,
    pub arguments: Map<String, Value>,
}

impl ToolCall {
    pub fn str_arg(&self, key: &str) -> Option<&str> {
        self.arguments.get(key).and_then(Value::as_str)
    }

    pub fn int_arg(&self, key: &str) -> Option<i64> {
        self.arguments.get(key).and_then(Value::as_i64)
    }
}

/// A tool call as a provider or script produced it, before validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawToolCall {
    /// Providers and scripts may leave this empty; the gateway then assigns one.
    #[serde(default)]
    pub id: String,
    pub name: String,
    pub arguments: Value,
}

impl From<&ToolCall> for RawToolCall {
    fn from(c: &ToolCall) -> Self {
        RawToolCall {
            id: c.id.clone(),
            name: c.name.to_string(),
            arguments: Value::Object(c.arguments.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RawTurn {
    FinalText(String),
    ToolCalls(Vec<RawToolCall>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelTurn {
    FinalText(String),
    ToolCalls(Vec<ToolCall>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self::plain(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::plain(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::plain(Role::Assistant, content)
    }

    pub fn assistant_tool_calls(calls: Vec<ToolCall>) -> Self {
        ChatMessage {
            role: Role::Assistant,
            content: String::new(),
            tool_calls: calls,
            tool_call_id: None,
        }
    }

    pub fn tool_result(call_id: impl Into<String>, content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::ToolResult,
            content: content.into(),
            tool_calls: Vec::new(),
            tool_call_id: Some(call_id.into()),
        }
    }

    fn plain(role: Role, content: impl Into<String>) -> Self {
        ChatMessage {
            role,
            content: content.into(),
            tool_calls: Vec::new(),
            tool_call_id: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolDeclaration {
    pub name: String,
    pub description: String,
    /// JSON Schema (object type) for the arguments.
    pub parameters: Value,
}

impl ToolDeclaration {
    /// Checks `arguments` against the declared object schema. Supports the
    /// subset the bundled declarations use: `properties` with `string` or
    /// `integer` types, `required`, and `additionalProperties: false`.
    pub fn validate_arguments(&self, arguments: &Value) -> Result<Map<String, Value>, String> {
        let args = arguments
            .as_object()
            .ok_or_else(|| format!("{}: arguments must be an object", self.name))?;
        let props = self
            .parameters
            .get("properties")
            .and_then(Value::as_object)
            .cloned()
            .unwrap_or_default();
        if let Some(required) = self.parameters.get("required").and_then(Value::as_array) {
            for key in required.iter().filter_map(Value::as_str) {
                if !args.contains_key(key) {
                    return Err(format!("{}: missing argument `{key}`", self.name));
                }
            }
        }
        let closed = self.parameters.get("additionalProperties") == Some(&Value::Bool(false));
        for (key, value) in args {
            let Some(schema) = props.get(key) else {
                if closed {
                    return Err(format!("{}: unexpected argument `{key}`", self.name));
                }
                continue;
            };
            let ok = match schema.get("type").and_then(Value::as_str) {
                Some("string") => value.is_string(),
                Some("integer") => value.is_i64() || value.is_u64(),
                Some("number") => value.is_number(),
                Some("boolean") => value.is_boolean(),
                _ => true,
            };
            if !ok {
                return Err(format!(
                    "{}: argument `{key}` = {value} does not match type {}",
                    self.name,
                    schema.get("type").unwrap_or(&Value::Null)
                ));
            }
        }
        Ok(args.clone())
    }
}

/// The two tools the agent may call.
pub fn default_tools() -> Vec<ToolDeclaration> {
    serde_json::from_str(TOOLS_ASSET).expect("bundled tool declarations are valid")
}

/// Identity of a request, used to key recordings.
pub fn request_hash(
    messages: &[ChatMessage],
    tools: &[ToolDeclaration],
    params: &GenerationParams,
) -> String {
    #[derive(Serialize)]
    struct Material<'a> {
        messages: &'a [ChatMessage],
        tools: &'a [ToolDeclaration],
        params: &'a GenerationParams,
    }
    json_digest(&Material {
        messages,
        tools,
        params,
    })
}

/// A chat backend.
pub trait ChatProvider: Send + Sync {
    fn complete_raw(
        &self,
        conversation_id: &str,
        messages: &[ChatMessage],
        tools: &[ToolDeclaration],
        params: &GenerationParams,
    ) -> Result<RawTurn, GatewayError>;

    /// True when the provider never touches the network.
    fn is_offline(&self) -> bool {
        false
    }
}

/// Shareable handle over a provider.
#[derive(Clone)]
pub struct Gateway {
    provider: Arc<dyn ChatProvider>,
}

impl Gateway {
    pub fn new(provider: Arc<dyn ChatProvider>) -> Self {
        Gateway { provider }
    }

    pub fn is_offline(&self) -> bool {
        self.provider.is_offline()
    }

    pub fn complete(
        &self,
        conversation_id: &str,
        messages: &[ChatMessage],
        tools: &[ToolDeclaration],
        params: &GenerationParams,
    ) -> Result<ModelTurn, GatewayError> {
        if messages.first().map(|m| m.role) != Some(Role::System) {
            return Err(GatewayError::InvalidConversation(
                "conversation must start with a SYSTEM message".into(),
            ));
        }
        params
            .validate()
            .map_err(GatewayError::InvalidConversation)?;
        check_tool_results(messages)?;
        match self
            .provider
            .complete_raw(conversation_id, messages, tools, params)?
        {
            RawTurn::FinalText(text) => Ok(ModelTurn::FinalText(text)),
            RawTurn::ToolCalls(calls) if calls.is_empty() => Err(GatewayError::MalformedToolCall(
                "turn has neither text nor tool calls".into(),
            )),
            RawTurn::ToolCalls(calls) => calls
                .into_iter()
                .enumerate()
                .map(|(i, mut c)| {
                    if c.id.is_empty() {
                        c.id = format!("call_{}_{}", messages.len(), i + 1);
                    }
                    validate_call(c, tools)
                })
                .collect::<Result<Vec<_>, _>>()
                .map(ModelTurn::ToolCalls),
        }
    }
}

fn validate_call(call: RawToolCall, tools: &[ToolDeclaration]) -> Result<ToolCall, GatewayError> {
    let decl = tools
        .iter()
        .find(|t| t.name == call.name)
        .ok_or_else(|| GatewayError::MalformedToolCall(format!("undeclared tool `{}`", call.name)))?;
    let name: ToolName = call.name.parse().map_err(GatewayError::MalformedToolCall)?;
    let arguments = decl
        .validate_arguments(&call.arguments)
        .map_err(GatewayError::MalformedToolCall)?;
    Ok(ToolCall {
        id: call.id,
        name,
        arguments,
    })
}

/// Every TOOL_RESULT must answer a tool call made earlier in the conversation.
pub fn check_tool_results(messages: &[ChatMessage]) -> Result<(), GatewayError> {
    let mut issued = std::collections::HashSet::new();
    for (i, m) in messages.iter().enumerate() {
        for c in &m.tool_calls {
            if m.role != Role::Assistant {
                return Err(GatewayError::InvalidConversation(format!(
                    "message {i}: only ASSISTANT messages carry tool calls"
                )));
            }
            issued.insert(c.id.as_str());
        }
        if m.role == Role::ToolResult {
            match m.tool_call_id.as_deref() {
                Some(id) if issued.contains(id) => {}
                other => {
                    return Err(GatewayError::InvalidConversation(format!(
                        "message {i}: tool result for unknown call {other:?}"
                    )))
                }
            }
        }
    }
    Ok(())
}
