//! Shared data types and the line-delimited dataset manifest.
//!
//! A manifest is a UTF-8 file with one JSON object per line. Paths inside a
//! record are relative to the manifest's directory so a dataset can be moved
//! as a unit.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("MANIFEST_SYNTAX: {path}:{line}: {message}")]
    ManifestSyntax {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("MISSING_FILE: record `{id}` references {path} which does not exist")]
    MissingFile { id: String, path: PathBuf },
    #[error("DUPLICATE_ID: `{id}` appears more than once (line {line})")]
    DuplicateId { id: String, line: usize },
    #[error("INVARIANT_VIOLATION: record `{id}` field `{field}`: {message}")]
    InvariantViolation {
        id: String,
        field: &'static str,
        message: String,
    },
    #[error("MANIFEST_SYNTAX: cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl DatasetError {
    pub fn code(&self) -> &'static str {
        match self {
            DatasetError::ManifestSyntax { .. } | DatasetError::Io { .. } => "MANIFEST_SYNTAX",
            DatasetError::MissingFile { .. } => "MISSING_FILE",
            DatasetError::DuplicateId { .. } => "DUPLICATE_ID",
            DatasetError::InvariantViolation { .. } => "INVARIANT_VIOLATION",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GroundTruth {
    Misuse,
    Correct,
}

/// A (variable, line) pair whose runtime value should be described.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProbeTarget {
    pub variable_name: String,
    /// 1-based line in the snippet.
    pub line_number: usize,
}

impl ProbeTarget {
    pub fn new(variable_name: impl Into<String>, line_number: usize) -> Self {
        Self {
            variable_name: variable_name.into(),
            line_number,
        }
    }
}

impl fmt::Display for ProbeTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.variable_name, self.line_number)
    }
}

/// A documented usage constraint for an API, optionally scoped to one parameter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Directive {
    pub api: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorSignature {
    pub exception_class: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message_substring: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OutputCheckMode {
    StdoutContains,
    StdoutNotContains,
    /// `value` is a manifest-relative path to a checker program that reads the
    /// patched run's stdout and exits 0 when the output is acceptable.
    CheckerScript,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputCheck {
    pub mode: OutputCheckMode,
    pub value: String,
}

/// The observable symptom of a misuse, used to decide whether a patch fixed it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Expectation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_signature: Option<ErrorSignature>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_check: Option<OutputCheck>,
}

/// One analyzed snippet and its ground truth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnippetRecord {
    pub id: String,
    pub library: String,
    pub snippet_path: PathBuf,
    #[serde(default)]
    pub data_files: Vec<PathBuf>,
    pub target_api: String,
    #[serde(default)]
    pub directives: Vec<Directive>,
    #[serde(default)]
    pub probe_targets: Vec<ProbeTarget>,
    #[serde(default)]
    pub data_dependent: bool,
    pub ground_truth: GroundTruth,
    #[serde(default)]
    pub misuse_description: String,
    #[serde(default)]
    pub expectation: Expectation,
    /// Snippet text, read at load time.
    #[serde(skip)]
    pub source: String,
    /// Directory the relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl SnippetRecord {
    /// Builds an ad-hoc record around inline source, for checking a snippet
    /// that is not part of any dataset.
    pub fn ad_hoc(id: &str, library: &str, source: String) -> Self {
        Self {
            id: id.to_string(),
            library: library.to_string(),
            snippet_path: PathBuf::from(format!("{id}.py")),
            data_files: Vec::new(),
            target_api: String::new(),
            directives: Vec::new(),
            probe_targets: Vec::new(),
            data_dependent: false,
            ground_truth: GroundTruth::Misuse,
            misuse_description: String::new(),
            expectation: Expectation::default(),
            source,
            base_dir: PathBuf::from("."),
        }
    }

    pub fn is_misuse(&self) -> bool {
        self.ground_truth == GroundTruth::Misuse
    }

    pub fn line_count(&self) -> usize {
        self.source.lines().count()
    }

    pub fn resolved_data_files(&self) -> Vec<PathBuf> {
        self.data_files
            .iter()
            .map(|p| self.base_dir.join(p))
            .collect()
    }

    pub fn resolve(&self, relative: impl AsRef<Path>) -> PathBuf {
        self.base_dir.join(relative)
    }

    /// Checks every record invariant that does not need the filesystem.
    pub fn validate(&self) -> Result<(), DatasetError> {
        let violation = |field: &'static str, message: String| DatasetError::InvariantViolation {
            id: self.id.clone(),
            field,
            message,
        };
        if self.id.trim().is_empty() {
            return Err(violation("id", "must be non-empty".into()));
        }
        if self.library.trim().is_empty() {
            return Err(violation("library", "must be non-empty".into()));
        }
        match self.ground_truth {
            GroundTruth::Correct => {
                if !self.misuse_description.is_empty() {
                    return Err(violation(
                        "misuse_description",
                        "must be empty when ground_truth is CORRECT".into(),
                    ));
                }
                if self.expectation.error_signature.is_some() {
                    return Err(violation(
                        "expectation",
                        "error_signature must be absent when ground_truth is CORRECT".into(),
                    ));
                }
            }
            GroundTruth::Misuse => {
                if self.expectation.error_signature.is_none()
                    && self.expectation.output_check.is_none()
                {
                    return Err(violation(
                        "expectation",
                        "a MISUSE record needs error_signature or output_check".into(),
                    ));
                }
            }
        }
        for d in &self.directives {
            if d.text.trim().is_empty() {
                return Err(violation("directives", format!("empty directive text for `{}`", d.api)));
            }
        }
        let lines = self.line_count();
        for t in &self.probe_targets {
            if t.line_number == 0 || t.line_number > lines {
                return Err(violation(
                    "probe_targets",
                    format!("{t} is outside the snippet's {lines} lines"),
                ));
            }
            if !occurs_as_identifier(&self.source, &t.variable_name) {
                return Err(violation(
                    "probe_targets",
                    format!("variable `{}` does not occur in the snippet", t.variable_name),
                ));
            }
        }
        Ok(())
    }
}

/// Whether `name` appears in `source` as a whole identifier token.
pub fn occurs_as_identifier(source: &str, name: &str) -> bool {
    if name.is_empty() || !name.chars().all(|c| c.is_alphanumeric() || c == '_') {
        return false;
    }
    let pattern = format!(r"(^|[^\w]){}($|[^\w])", regex::escape(name));
    Regex::new(&pattern).map(|re| re.is_match(source)).unwrap_or(false)
}

/// Runtime facts about one probed variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataInfo {
    pub target: ProbeTarget,
    pub type_name: String,
    #[serde(flatten)]
    pub detail: DataDetail,
}

impl DataInfo {
    pub fn kind(&self) -> DataKind {
        self.detail.kind()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DataKind {
    Frame,
    Ndarray,
    Sequence,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameColumn {
    pub name: String,
    pub dtype: String,
    pub non_null: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameDetail {
    pub columns: Vec<FrameColumn>,
    pub row_count: u64,
    /// At most three rows of the frame's head, one whitespace-normalized line each.
    pub sample_rows: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DataDetail {
    Frame(FrameDetail),
    Ndarray { shape: Vec<u64>, dtype: String },
    Sequence { length: u64 },
    Other,
}

impl DataDetail {
    pub fn kind(&self) -> DataKind {
        match self {
            DataDetail::Frame(_) => DataKind::Frame,
            DataDetail::Ndarray { .. } => DataKind::Ndarray,
            DataDetail::Sequence { .. } => DataKind::Sequence,
            DataDetail::Other => DataKind::Other,
        }
    }
}

pub const MAX_SAMPLE_ROWS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Correctness {
    Yes,
    No,
}

/// A parsed model answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub correct: Correctness,
    pub patch: Option<String>,
    pub explanation: Option<String>,
    pub raw: String,
}

impl Verdict {
    pub fn flags_misuse(&self) -> bool {
        self.correct == Correctness::No
    }

    /// The verdict in the JSON answer shape the model is asked to produce.
    pub fn to_contract_json(&self) -> String {
        let mut obj = serde_json::Map::new();
        obj.insert(
            "correct".into(),
            serde_json::Value::String(match self.correct {
                Correctness::Yes => "yes".into(),
                Correctness::No => "no".into(),
            }),
        );
        if let Some(p) = &self.patch {
            obj.insert("patch".into(), serde_json::Value::String(p.clone()));
        }
        if let Some(e) = &self.explanation {
            obj.insert("explanation".into(), serde_json::Value::String(e.clone()));
        }
        serde_json::Value::Object(obj).to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub model_name: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
}

fn default_max_output_tokens() -> u32 {
    2048
}

impl GenerationParams {
    pub fn new(model_name: impl Into<String>) -> Self {
        Self {
            model_name: model_name.into(),
            temperature: 0.0,
            max_output_tokens: default_max_output_tokens(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if self.max_output_tokens == 0 {
            return Err("max_output_tokens must be positive".into());
        }
        Ok(())
    }
}

/// An ordered, validated set of records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub records: Vec<SnippetRecord>,
    pub base_dir: PathBuf,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&SnippetRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn misuse_count(&self) -> usize {
        self.records.iter().filter(|r| r.is_misuse()).count()
    }

    /// Serializes back to manifest form, one record per line.
    pub fn to_manifest(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }
}

pub fn load_dataset(manifest_path: &Path) -> Result<Dataset, DatasetError> {
    let text = fs::read_to_string(manifest_path).map_err(|source| DatasetError::Io {
        path: manifest_path.to_path_buf(),
        source,
    })?;
    let base_dir = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    parse_manifest(&text, manifest_path, &base_dir)
}

/// Parses manifest text whose relative paths resolve against `base_dir`.
pub fn parse_manifest(
    text: &str,
    manifest_path: &Path,
    base_dir: &Path,
) -> Result<Dataset, DatasetError> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut record: SnippetRecord =
            serde_json::from_str(line).map_err(|e| DatasetError::ManifestSyntax {
                path: manifest_path.to_path_buf(),
                line: line_no,
                message: e.to_string(),
            })?;
        if !seen.insert(record.id.clone()) {
            return Err(DatasetError::DuplicateId {
                id: record.id,
                line: line_no,
            });
        }
        record.base_dir = base_dir.to_path_buf();
        let snippet = record.resolve(&record.snippet_path);
        record.source = fs::read_to_string(&snippet).map_err(|_| DatasetError::MissingFile {
            id: record.id.clone(),
            path: snippet.clone(),
        })?;
        for data in record.resolved_data_files() {
            if !data.is_file() {
                return Err(DatasetError::MissingFile {
                    id: record.id.clone(),
                    path: data,
                });
            }
        }
        if let Some(OutputCheck {
            mode: OutputCheckMode::CheckerScript,
            value,
        }) = &record.expectation.output_check
        {
            let checker = record.resolve(value);
            if !checker.is_file() {
                return Err(DatasetError::MissingFile {
                    id: record.id.clone(),
                    path: checker,
                });
            }
        }
        record.validate()?;
        records.push(record);
    }
    Ok(Dataset {
        records,
        base_dir: base_dir.to_path_buf(),
    })
}
