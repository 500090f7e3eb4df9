//! OpenAI-compatible chat completions over HTTP.

use std::time::Duration;

use serde_json::{json, Map, Value};

use super::{
    ChatMessage, ChatProvider, GatewayError, RawToolCall, RawTurn, Role, ToolDeclaration, API_BASE_ENV,
    API_KEY_ENV,
};
use crate::domain::GenerationParams;

pub const DEFAULT_API_BASE: &str = "https://api.openai.com/v1";
pub const DEFAULT_ATTEMPTS: u32 = 3;
const BODY_EXCERPT: usize = 400;

#[derive(Debug, Clone)]
pub struct HttpProvider {
    base_url: String,
    api_key: String,
    attempts: u32,
    backoff: Duration,
    client: reqwest::blocking::Client,
}

impl HttpProvider {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .expect("http client builds");
        HttpProvider {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
            attempts: DEFAULT_ATTEMPTS,
            backoff: Duration::from_secs(1),
            client,
        }
    }

    /// Reads `DSCHECKER_API_KEY` and, optionally, `DSCHECKER_API_BASE`.
    pub fn from_env() -> Result<Self, GatewayError> {
        let key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| GatewayError::ProviderConfig(format!("{API_KEY_ENV} is not set")))?;
        let base = std::env::var(API_BASE_ENV)
            .ok()
            .filter(|b| !b.is_empty())
            .unwrap_or_else(|| DEFAULT_API_BASE.to_string());
        Ok(Self::new(base, key))
    }

    pub fn with_retry(mut self, attempts: u32, backoff: Duration) -> Self {
        self.attempts = attempts.max(1);
        self.backoff = backoff;
        self
    }

    fn post_once(&self, body: &Value) -> Result<Value, Attempt> {
        let resp = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .bearer_auth(&self.api_key)
            .json(body)
            .send()
            .map_err(|e| Attempt::Retry(GatewayError::ProviderHttp {
                status: 0,
                body: e.to_string(),
            }))?;
        let status = resp.status();
        let retry_after = resp
            .headers()
            .get(reqwest::header::RETRY_AFTER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse().ok());
        let text = resp.text().unwrap_or_default();
        if status.is_success() {
            return serde_json::from_str(&text).map_err(|e| {
                Attempt::Fatal(GatewayError::ProviderHttp {
                    status: status.as_u16(),
                    body: format!("unparseable response: {e}"),
                })
            });
        }
        if status.as_u16() == 429 {
            return Err(Attempt::Retry(GatewayError::RateLimited {
                retry_after_s: retry_after,
            }));
        }
        let err = GatewayError::ProviderHttp {
            status: status.as_u16(),
            body: excerpt(&text),
        };
        if status.is_server_error() {
            Err(Attempt::Retry(err))
        } else {
            Err(Attempt::Fatal(err))
        }
    }
}

enum Attempt {
    Retry(GatewayError),
    Fatal(GatewayError),
}

fn excerpt(text: &str) -> String {
    match text.char_indices().nth(BODY_EXCERPT) {
        Some((i, _)) => format!("{}...", &text[..i]),
        None => text.to_string(),
    }
}

/// Tool declarations in the wire format of the chat completions API.
pub fn wire_tools(tools: &[ToolDeclaration]) -> Value {
    Value::Array(
        tools
            .iter()
            .map(|t| {
                json!({
                    "type": "function",
                    "function": {
                        "name": t.name,
                        "description": t.description,
                        "parameters": t.parameters,
                    }
                })
            })
            .collect(),
    )
}

pub fn wire_messages(messages: &[ChatMessage]) -> Value {
    Value::Array(
        messages
            .iter()
            .map(|m| match m.role {
                Role::System => json!({"role": "system", "content": m.content}),
                Role::User => json!({"role": "user", "content": m.content}),
                Role::Assistant if m.tool_calls.is_empty() => {
                    json!({"role": "assistant", "content": m.content})
                }
                Role::Assistant => {
                    let calls: Vec<Value> = m
                        .tool_calls
                        .iter()
                        .map(|c| {
                            json!({
                                "id": c.id,
                                "type": "function",
                                "function": {
                                    "name": c.name.as_str(),
                                    "arguments": Value::Object(c.arguments.clone()).to_string(),
                                }
                            })
                        })
                        .collect();
                    let content = if m.content.is_empty() {
                        Value::Null
                    } else {
                        Value::String(m.content.clone())
                    };
                    json!({"role": "assistant", "content": content, "tool_calls": calls})
                }
                Role::ToolResult => json!({
                    "role": "tool",
                    "tool_call_id": m.tool_call_id,
                    "content": m.content,
                }),
            })
            .collect(),
    )
}

pub fn wire_request(messages: &[ChatMessage], tools: &[ToolDeclaration], params: &GenerationParams) -> Value {
    let mut body = Map::new();
    body.insert("model".into(), json!(params.model_name));
    body.insert("messages".into(), wire_messages(messages));
    body.insert("temperature".into(), json!(params.temperature));
    body.insert("max_tokens".into(), json!(params.max_output_tokens));
    if !tools.is_empty() {
        body.insert("tools".into(), wire_tools(tools));
    }
    Value::Object(body)
}

/// Extracts the first choice of a chat completions response.
pub fn parse_response(body: &Value) -> Result<RawTurn, GatewayError> {
    let bad = |what: &str| GatewayError::ProviderHttp {
        status: 200,
        body: format!("response {what}"),
    };
    let message = body
        .pointer("/choices/0/message")
        .ok_or_else(|| bad("has no choices[0].message"))?;
    if let Some(calls) = message.get("tool_calls").and_then(Value::as_array) {
        if !calls.is_empty() {
            return calls
                .iter()
                .map(|c| {
                    let name = c
                        .pointer("/function/name")
                        .and_then(Value::as_str)
                        .ok_or_else(|| GatewayError::MalformedToolCall("tool call without name".into()))?;
                    let args = match c.pointer("/function/arguments") {
                        Some(Value::String(s)) => serde_json::from_str(s).map_err(|e| {
                            GatewayError::MalformedToolCall(format!("{name}: arguments are not JSON: {e}"))
                        })?,
                        Some(v @ Value::Object(_)) => v.clone(),
                        _ => Value::Object(Map::new()),
                    };
                    Ok(RawToolCall {
                        id: c.get("id").and_then(Value::as_str).unwrap_or_default().to_string(),
                        name: name.to_string(),
                        arguments: args,
                    })
                })
                .collect::<Result<Vec<_>, _>>()
                .map(RawTurn::ToolCalls);
        }
    }
    message
        .get("content")
        .and_then(Value::as_str)
        .map(|s| RawTurn::FinalText(s.to_string()))
        .ok_or_else(|| bad("message has neither content nor tool calls"))
}

impl ChatProvider for HttpProvider {
    fn complete_raw(
        &self,
        conversation_id: &str,
        messages: &[ChatMessage],
        tools: &[ToolDeclaration],
        params: &GenerationParams,
    ) -> Result<RawTurn, GatewayError> {
        let body = wire_request(messages, tools, params);
        let mut delay = self.backoff;
        let mut last = None;
        for attempt in 1..=self.attempts {
            match self.post_once(&body) {
                Ok(v) => return parse_response(&v),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(e)) => {
                    log::warn!("{conversation_id}: attempt {attempt} failed: {e}");
                    last = Some(e);
                    if attempt < self.attempts {
                        std::thread::sleep(delay);
                        delay *= 2;
                    }
                }
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{default_tools, ToolCall, ToolName};
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::{Arc, Mutex};
    use std::thread;

    /// Serves canned responses in order, recording each request body.
    fn mock(responses: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>, thread::JoinHandle<()>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let seen = Arc::new(Mutex::new(Vec::new()));
        let log = seen.clone();
        let handle = thread::spawn(move || {
            for (status, body) in responses {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream);
                let mut len = 0usize;
                let mut head = String::new();
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    head.push_str(&line);
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                log.lock().unwrap().push(format!("{head}\n{}", String::from_utf8(buf).unwrap()));
                let mut stream = reader.into_inner();
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
        });
        (url, seen, handle)
    }

    fn text_response(text: &str) -> String {
        json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
    }

    fn provider(url: &str) -> HttpProvider {
        HttpProvider::new(url, "k").with_retry(3, Duration::from_millis(1))
    }

    fn convo() -> Vec<ChatMessage> {
        vec![ChatMessage::system("s"), ChatMessage::user("u")]
    }

    #[test]
    fn final_text_and_auth() {
        let (url, seen, h) = mock(vec![(200, text_response("{\"correct\":\"yes\"}"))]);
        let turn = provider(&url)
            .complete_raw("c", &convo(), &default_tools(), &GenerationParams::new("gpt-x"))
            .unwrap();
        h.join().unwrap();
        assert_eq!(turn, RawTurn::FinalText("{\"correct\":\"yes\"}".into()));
        let req = &seen.lock().unwrap()[0];
        assert!(req.starts_with("POST /chat/completions"));
        assert!(req.to_ascii_lowercase().contains("authorization: bearer k"));
        assert!(req.contains("\"model\":\"gpt-x\""));
    }

    #[test]
    fn retries_server_errors() {
        let (url, seen, h) = mock(vec![
            (500, "oops".into()),
            (503, "busy".into()),
            (200, text_response("done")),
        ]);
        let turn = provider(&url)
            .complete_raw("c", &convo(), &[], &GenerationParams::new("m"))
            .unwrap();
        h.join().unwrap();
        assert_eq!(turn, RawTurn::FinalText("done".into()));
        assert_eq!(seen.lock().unwrap().len(), 3);
    }

    #[test]
    fn rate_limit_exhausts_retries() {
        let (url, _, h) = mock(vec![(429, "{}".into()); 3]);
        let err = provider(&url)
            .complete_raw("c", &convo(), &[], &GenerationParams::new("m"))
            .unwrap_err();
        h.join().unwrap();
        assert_eq!(err.code(), "RATE_LIMITED");
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (url, seen, h) = mock(vec![(401, "{\"error\":\"bad key\"}".into())]);
        let err = provider(&url)
            .complete_raw("c", &convo(), &[], &GenerationParams::new("m"))
            .unwrap_err();
        h.join().unwrap();
        assert_eq!(
            err,
            GatewayError::ProviderHttp {
                status: 401,
                body: "{\"error\":\"bad key\"}".into()
            }
        );
        assert_eq!(seen.lock().unwrap().len(), 1);
    }

    #[test]
    fn connection_refused() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        drop(listener);
        let err = provider(&url)
            .complete_raw("c", &convo(), &[], &GenerationParams::new("m"))
            .unwrap_err();
        assert_eq!(err.code(), "PROVIDER_HTTP");
    }

    #[test]
    fn tool_call_response() {
        let body = json!({"choices": [{"message": {"role": "assistant", "content": null, "tool_calls": [
            {"id": "call_1", "type": "function",
             "function": {"name": "get_variable_info", "arguments": "{\"variable_name\":\"df\",\"line_number\":4}"}}
        ]}}]});
        let RawTurn::ToolCalls(calls) = parse_response(&body).unwrap() else { panic!() };
        assert_eq!(calls[0].id, "call_1");
        assert_eq!(calls[0].arguments, json!({"variable_name": "df", "line_number": 4}));

        let broken = json!({"choices": [{"message": {"tool_calls": [
            {"id": "x", "function": {"name": "get_variable_info", "arguments": "{oops"}}
        ]}}]});
        assert_eq!(parse_response(&broken).unwrap_err().code(), "MALFORMED_TOOL_CALL");
        assert_eq!(parse_response(&json!({})).unwrap_err().code(), "PROVIDER_HTTP");
    }

    #[test]
    fn message_wire_shape() {
        let mut args = Map::new();
        args.insert("api_name".into(), json!("SimpleImputer"));
        let msgs = vec![
            ChatMessage::system("s"),
            ChatMessage::user("u"),
            ChatMessage::assistant_tool_calls(vec![ToolCall {
                id: "t1".into(),
                name: ToolName::GetApiDocumentation,
                arguments: args,
            }]),
            ChatMessage::tool_result("t1", "docs"),
        ];
        let wire = wire_messages(&msgs);
        assert_eq!(wire[2]["content"], Value::Null);
        assert_eq!(wire[2]["tool_calls"][0]["function"]["arguments"], "{\"api_name\":\"SimpleImputer\"}");
        assert_eq!(wire[3], json!({"role": "tool", "tool_call_id": "t1", "content": "docs"}));
    }
}
