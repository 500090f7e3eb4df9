//! Scripted model conversations.
//!
//! A transcript file holds one conversation: the turns the model returned, in
//! order, each optionally pinned to the hash of the request that produced it.
//! A file without a `conversation_id` is a fallback script that serves any
//! conversation not covered by a dedicated file.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{request_hash, ChatMessage, ChatProvider, GatewayError, RawTurn, ToolDeclaration};
use crate::domain::GenerationParams;

pub const LLM_TRANSCRIPT_FORMAT: &str = "dschecker-llm-transcript";
pub const LLM_TRANSCRIPT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_hash: Option<String>,
    pub turn: RawTurn,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmTranscript {
    pub format: String,
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conversation_id: Option<String>,
    pub exchanges: Vec<Exchange>,
}

impl LlmTranscript {
    pub fn new(conversation_id: Option<String>) -> Self {
        LlmTranscript {
            format: LLM_TRANSCRIPT_FORMAT.into(),
            version: LLM_TRANSCRIPT_VERSION,
            conversation_id,
            exchanges: Vec::new(),
        }
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, GatewayError> {
        let t: LlmTranscript = serde_json::from_str(text)
            .map_err(|e| GatewayError::Transcript(format!("{origin}: {e}")))?;
        if t.format != LLM_TRANSCRIPT_FORMAT || t.version != LLM_TRANSCRIPT_VERSION {
            return Err(GatewayError::Transcript(format!(
                "{origin}: expected {LLM_TRANSCRIPT_FORMAT} v{LLM_TRANSCRIPT_VERSION}, found {} v{}",
                t.format, t.version
            )));
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = fs::read_to_string(path)
            .map_err(|e| GatewayError::Transcript(format!("{}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn save(&self, path: &Path) -> Result<(), GatewayError> {
        let text = serde_json::to_string_pretty(self).expect("transcript serializes");
        fs::write(path, text + "\n")
            .map_err(|e| GatewayError::Transcript(format!("{}: {e}", path.display())))
    }
}

/// Transcript files named by a path: the file itself, or every `*.json` in a directory.
pub fn transcript_files(path: &Path) -> Result<Vec<PathBuf>, GatewayError> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let rd = fs::read_dir(path)
        .map_err(|e| GatewayError::Transcript(format!("{}: {e}", path.display())))?;
    let mut files: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

/// File name used for a recorded conversation.
pub fn transcript_file_name(conversation_id: &str) -> String {
    let safe: String = conversation_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect();
    format!("{safe}.json")
}

/// Serves model turns from transcripts without touching the network.
#[derive(Debug)]
pub struct ReplayProvider {
    scripts: HashMap<String, Vec<Exchange>>,
    fallback: Option<Vec<Exchange>>,
    cursors: Mutex<HashMap<String, usize>>,
}

impl ReplayProvider {
    pub fn new(transcripts: Vec<LlmTranscript>) -> Result<Self, GatewayError> {
        let mut scripts = HashMap::new();
        let mut fallback = None;
        for t in transcripts {
            match t.conversation_id {
                Some(id) => {
                    if scripts.insert(id.clone(), t.exchanges).is_some() {
                        return Err(GatewayError::Transcript(format!(
                            "two transcripts for conversation `{id}`"
                        )));
                    }
                }
                None => {
                    if fallback.replace(t.exchanges).is_some() {
                        return Err(GatewayError::Transcript(
                            "more than one fallback transcript".into(),
                        ));
                    }
                }
            }
        }
        Ok(ReplayProvider {
            scripts,
            fallback,
            cursors: Mutex::new(HashMap::new()),
        })
    }

    /// Loads a transcript file or a directory of them.
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let transcripts = transcript_files(path)?
            .iter()
            .map(|p| LlmTranscript::load(p))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(transcripts)
    }

    pub fn has_script(&self, conversation_id: &str) -> bool {
        self.fallback.is_some() || self.scripts.contains_key(conversation_id)
    }
}

impl ChatProvider for ReplayProvider {
    fn complete_raw(
        &self,
        conversation_id: &str,
        messages: &[ChatMessage],
        tools: &[ToolDeclaration],
        params: &GenerationParams,
    ) -> Result<RawTurn, GatewayError> {
        let mismatch = |turn: usize, detail: String| GatewayError::ReplayMismatch {
            conversation: conversation_id.to_string(),
            turn,
            detail,
        };
        let script = self
            .scripts
            .get(conversation_id)
            .or(self.fallback.as_ref())
            .ok_or_else(|| mismatch(0, "no transcript for this conversation".into()))?;
        let mut cursors = self.cursors.lock().expect("cursor lock");
        let cursor = cursors.entry(conversation_id.to_string()).or_insert(0);
        let turn = *cursor;
        let exchange = script
            .get(turn)
            .ok_or_else(|| mismatch(turn, format!("script has only {} turns", script.len())))?;
        if let Some(expected) = &exchange.request_hash {
            let actual = request_hash(messages, tools, params);
            if *expected != actual {
                return Err(mismatch(
                    turn,
                    format!("request hash {actual} differs from recorded {expected}"),
                ));
            }
        }
        *cursor += 1;
        Ok(exchange.turn.clone())
    }

    fn is_offline(&self) -> bool {
        true
    }
}

/// Forwards to another provider and writes one transcript per conversation.
pub struct RecordingProvider {
    inner: Arc<dyn ChatProvider>,
    dir: PathBuf,
    conversations: Mutex<BTreeMap<String, LlmTranscript>>,
}

impl RecordingProvider {
    pub fn new(inner: Arc<dyn ChatProvider>, dir: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)
            .map_err(|e| GatewayError::Transcript(format!("{}: {e}", dir.display())))?;
        Ok(RecordingProvider {
            inner,
            dir,
            conversations: Mutex::new(BTreeMap::new()),
        })
    }
}

impl ChatProvider for RecordingProvider {
    fn complete_raw(
        &self,
        conversation_id: &str,
        messages: &[ChatMessage],
        tools: &[ToolDeclaration],
        params: &GenerationParams,
    ) -> Result<RawTurn, GatewayError> {
        let turn = self
            .inner
            .complete_raw(conversation_id, messages, tools, params)?;
        let mut convs = self.conversations.lock().expect("recording lock");
        let t = convs
            .entry(conversation_id.to_string())
            .or_insert_with(|| LlmTranscript::new(Some(conversation_id.to_string())));
        t.exchanges.push(Exchange {
            request_hash: Some(request_hash(messages, tools, params)),
            turn: turn.clone(),
        });
        t.save(&self.dir.join(transcript_file_name(conversation_id)))?;
        Ok(turn)
    }

    fn is_offline(&self) -> bool {
        self.inner.is_offline()
    }
}
