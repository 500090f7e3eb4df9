//! Prompt rendering for the five detector variants.
//!
//! Every variant shares one template. Sections are emitted in a fixed order
//! (task, code, data information, API directive, response format) and a
//! section with nothing to show is left out entirely, so a record without
//! directives renders `Dir` identical to `Base` and `Full` identical to `Data`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::{Captures, Regex};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Correctness, DataDetail, DataInfo, Directive, SnippetRecord};
use crate::verdict::parse_verdict;

pub const DEFAULT_TEMPLATE: &str = include_str!("../assets/prompt_template.txt");
pub const DEFAULT_EXEMPLARS: &str = include_str!("../assets/exemplars.json");

/// Placeholder names that must never survive rendering.
pub const CORE_PLACEHOLDERS: [&str; 7] =
    ["lib", "code", "variable", "linenum", "data", "directive", "api"];

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("EMPTY_SNIPPET: record `{0}` has no code")]
    EmptySnippet(String),
    #[error("FEWSHOT_WITHOUT_EXEMPLARS: the few-shot variant needs at least one exemplar")]
    FewShotWithoutExemplars,
    #[error("TEMPLATE_SYNTAX: {0}")]
    Template(String),
    #[error("EXEMPLAR_STORE: {0}")]
    Exemplars(String),
}

impl PromptError {
    pub fn code(&self) -> &'static str {
        match self {
            PromptError::EmptySnippet(_) => "EMPTY_SNIPPET",
            PromptError::FewShotWithoutExemplars => "FEWSHOT_WITHOUT_EXEMPLARS",
            PromptError::Template(_) => "TEMPLATE_SYNTAX",
            PromptError::Exemplars(_) => "EXEMPLAR_STORE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptVariant {
    Base,
    Data,
    Dir,
    Full,
    #[serde(rename = "fewshot")]
    FewShot,
}

impl PromptVariant {
    pub const ALL: [PromptVariant; 5] = [
        PromptVariant::Base,
        PromptVariant::Data,
        PromptVariant::Dir,
        PromptVariant::Full,
        PromptVariant::FewShot,
    ];

    pub fn includes_data(self) -> bool {
        matches!(self, PromptVariant::Data | PromptVariant::Full | PromptVariant::FewShot)
    }

    pub fn includes_directives(self) -> bool {
        matches!(self, PromptVariant::Dir | PromptVariant::Full | PromptVariant::FewShot)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PromptVariant::Base => "base",
            PromptVariant::Data => "data",
            PromptVariant::Dir => "dir",
            PromptVariant::Full => "full",
            PromptVariant::FewShot => "fewshot",
        }
    }
}

impl fmt::Display for PromptVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PromptVariant::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown prompt variant `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    pub variant: PromptVariant,
    pub substitutions: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExemplar {
    pub code: String,
    pub library: String,
    pub data_section: String,
    pub directive_section: String,
    /// The answer in the JSON contract shape.
    pub expected_answer: String,
}

/// Loads an exemplar store and checks it holds one `yes` and one `no` answer.
pub fn load_exemplars(path: &Path) -> Result<Vec<FewShotExemplar>, PromptError> {
    let text = fs::read_to_string(path)
        .map_err(|e| PromptError::Exemplars(format!("{}: {e}", path.display())))?;
    parse_exemplars(&text)
}

pub fn parse_exemplars(text: &str) -> Result<Vec<FewShotExemplar>, PromptError> {
    let exemplars: Vec<FewShotExemplar> =
        serde_json::from_str(text).map_err(|e| PromptError::Exemplars(e.to_string()))?;
    if exemplars.len() != 2 {
        return Err(PromptError::Exemplars(format!(
            "expected exactly two exemplars, found {}",
            exemplars.len()
        )));
    }
    let mut answers = Vec::new();
    for ex in &exemplars {
        let v = parse_verdict(&ex.expected_answer)
            .map_err(|e| PromptError::Exemplars(format!("bad expected_answer: {e}")))?;
        answers.push(v.correct);
    }
    if !(answers.contains(&Correctness::Yes) && answers.contains(&Correctness::No)) {
        return Err(PromptError::Exemplars(
            "need one correct and one incorrect exemplar".into(),
        ));
    }
    Ok(exemplars)
}

const SECTIONS: [(&str, &[&str]); 14] = [
    ("system", &["lib"]),
    ("agent_system", &["lib"]),
    ("task", &["lib"]),
    ("code", &["code"]),
    ("data_header", &[]),
    ("data_item", &["variable", "linenum", "data"]),
    ("directive_header", &["lib"]),
    ("directive_item", &["api", "directive", "lib"]),
    ("directive_item_parameter", &["api", "directive", "parameter", "lib"]),
    ("response_format", &[]),
    ("exemplar_header", &[]),
    ("exemplar", &["index", "lib", "code", "sections", "answer"]),
    ("nudge", &[]),
    ("reprompt", &["reason"]),
];

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\$([a-z_]+)").expect("valid regex"))
}

/// Regex matching any core placeholder token.
pub fn residual_placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"\$(lib|code|variable|linenum|data|directive|api)\b").expect("valid regex")
    })
}

/// A parsed prompt template: named sections of text with `$placeholders`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub version: u32,
    sections: HashMap<String, String>,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate::parse(DEFAULT_TEMPLATE).expect("bundled template is valid")
    }
}

impl PromptTemplate {
    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let text = fs::read_to_string(path)
            .map_err(|e| PromptError::Template(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, PromptError> {
        let mut version = None;
        let mut sections: HashMap<String, String> = HashMap::new();
        let mut current: Option<(String, Vec<&str>)> = None;
        for line in text.lines() {
            if let Some(name) = line.strip_prefix("@section ") {
                if let Some((n, body)) = current.take() {
                    sections.insert(n, body.join("\n"));
                }
                let name = name.trim().to_string();
                if sections.contains_key(&name) {
                    return Err(PromptError::Template(format!("duplicate section `{name}`")));
                }
                current = Some((name, Vec::new()));
            } else if let Some(v) = line.strip_prefix("@version ") {
                version = Some(
                    v.trim()
                        .parse()
                        .map_err(|_| PromptError::Template(format!("bad version `{v}`")))?,
                );
            } else if let Some((_, body)) = current.as_mut() {
                body.push(line);
            } else if !(line.starts_with('#') || line.trim().is_empty()) {
                return Err(PromptError::Template(format!(
                    "text outside any section: `{line}`"
                )));
            }
        }
        if let Some((n, body)) = current.take() {
            sections.insert(n, body.join("\n"));
        }
        for (name, allowed) in SECTIONS {
            let body = sections
                .get(name)
                .ok_or_else(|| PromptError::Template(format!("missing section `{name}`")))?;
            for cap in placeholder_re().captures_iter(body) {
                if !allowed.contains(&&cap[1]) {
                    return Err(PromptError::Template(format!(
                        "section `{name}` uses unknown placeholder `${}`",
                        &cap[1]
                    )));
                }
            }
        }
        if let Some(extra) = sections
            .keys()
            .find(|k| !SECTIONS.iter().any(|(n, _)| n == k))
        {
            return Err(PromptError::Template(format!("unknown section `{extra}`")));
        }
        Ok(PromptTemplate {
            version: version.ok_or_else(|| PromptError::Template("missing @version".into()))?,
            sections,
        })
    }

    /// Substitutes in a single pass, so `$` sequences inside substituted
    /// values are never expanded again.
    fn fill(&self, section: &str, values: &[(&str, &str)]) -> String {
        let body = &self.sections[section];
        placeholder_re()
            .replace_all(body, |caps: &Captures<'_>| {
                values
                    .iter()
                    .find(|(k, _)| *k == &caps[1])
                    .map(|(_, v)| v.to_string())
                    .unwrap_or_else(|| caps[0].to_string())
            })
            .into_owned()
    }

    pub fn system_text(&self, library: &str) -> String {
        self.fill("system", &[("lib", library)])
    }

    pub fn agent_system_text(&self, library: &str) -> String {
        self.fill("agent_system", &[("lib", library)])
    }

    pub fn nudge_text(&self) -> String {
        self.fill("nudge", &[])
    }

    pub fn reprompt_text(&self, reason: &str) -> String {
        self.fill("reprompt", &[("reason", reason)])
    }

    /// One data-information block for a probed variable.
    pub fn render_data_section(&self, info: &DataInfo) -> String {
        let line = info.target.line_number.to_string();
        let body = render_data_body(info);
        self.fill(
            "data_item",
            &[
                ("variable", &info.target.variable_name),
                ("linenum", &line),
                ("data", &body),
            ],
        )
    }

    pub fn render_directive(&self, library: &str, directive: &Directive) -> String {
        match &directive.parameter {
            Some(p) => self.fill(
                "directive_item_parameter",
                &[
                    ("api", &directive.api),
                    ("directive", &directive.text),
                    ("parameter", p),
                    ("lib", library),
                ],
            ),
            None => self.fill(
                "directive_item",
                &[
                    ("api", &directive.api),
                    ("directive", &directive.text),
                    ("lib", library),
                ],
            ),
        }
    }

    pub fn render(
        &self,
        variant: PromptVariant,
        record: &SnippetRecord,
        data_infos: &[DataInfo],
        exemplars: &[FewShotExemplar],
    ) -> Result<PromptBundle, PromptError> {
        if record.source.trim().is_empty() {
            return Err(PromptError::EmptySnippet(record.id.clone()));
        }
        if variant == PromptVariant::FewShot && exemplars.is_empty() {
            return Err(PromptError::FewShotWithoutExemplars);
        }
        let lib = record.library.as_str();
        let code = record.source.trim_end_matches('\n');
        let mut subs = BTreeMap::new();
        subs.insert("lib".to_string(), lib.to_string());
        subs.insert("code".to_string(), code.to_string());

        let mut blocks: Vec<String> = Vec::new();
        if variant == PromptVariant::FewShot {
            blocks.push(self.fill("exemplar_header", &[]));
            for (i, ex) in exemplars.iter().enumerate() {
                blocks.push(self.render_exemplar(i + 1, ex));
            }
        }
        blocks.push(self.fill("task", &[("lib", lib)]));
        blocks.push(self.fill("code", &[("code", code)]));

        if variant.includes_data() && !data_infos.is_empty() {
            let mut ordered: Vec<&DataInfo> = data_infos.iter().collect();
            ordered.sort_by(|a, b| {
                (a.target.line_number, &a.target.variable_name)
                    .cmp(&(b.target.line_number, &b.target.variable_name))
            });
            let mut section = vec![self.fill("data_header", &[])];
            for (i, info) in ordered.iter().enumerate() {
                let n = i + 1;
                subs.insert(format!("variable#{n}"), info.target.variable_name.clone());
                subs.insert(format!("linenum#{n}"), info.target.line_number.to_string());
                subs.insert(format!("data#{n}"), render_data_body(info));
                section.push(self.render_data_section(info));
            }
            blocks.push(section.join("\n"));
        }

        if variant.includes_directives() && !record.directives.is_empty() {
            let mut section = vec![self.fill("directive_header", &[("lib", lib)])];
            for (i, d) in record.directives.iter().enumerate() {
                let n = i + 1;
                subs.insert(format!("api#{n}"), d.api.clone());
                subs.insert(format!("directive#{n}"), d.text.clone());
                if let Some(p) = &d.parameter {
                    subs.insert(format!("parameter#{n}"), p.clone());
                }
                section.push(self.render_directive(lib, d));
            }
            blocks.push(section.join("\n"));
        }

        blocks.push(self.fill("response_format", &[]));

        Ok(PromptBundle {
            system_text: self.system_text(lib),
            user_text: blocks.join("\n\n"),
            variant,
            substitutions: subs,
        })
    }

    fn render_exemplar(&self, index: usize, ex: &FewShotExemplar) -> String {
        let idx = index.to_string();
        let sections = [ex.data_section.as_str(), ex.directive_section.as_str()]
            .into_iter()
            .filter(|s| !s.trim().is_empty())
            .collect::<Vec<_>>()
            .join("\n");
        self.fill(
            "exemplar",
            &[
                ("index", &idx),
                ("lib", &ex.library),
                ("code", ex.code.trim_end_matches('\n')),
                ("sections", &sections),
                ("answer", &ex.expected_answer),
            ],
        )
    }
}

/// Kind-specific description of a probed value, without the variable header.
pub fn render_data_body(info: &DataInfo) -> String {
    let mut out = format!("type: {}", info.type_name);
    match &info.detail {
        DataDetail::Frame(frame) => {
            out.push_str(&format!("\nrows: {}\ncolumns:", frame.row_count));
            let name_w = frame.columns.iter().map(|c| c.name.len()).max().unwrap_or(0);
            let dtype_w = frame.columns.iter().map(|c| c.dtype.len()).max().unwrap_or(0);
            for c in &frame.columns {
                out.push_str(&format!(
                    "\n  {:<name_w$}  {:<dtype_w$}  {} non-null",
                    c.name, c.dtype, c.non_null
                ));
            }
            out.push_str("\nsample rows:");
            for row in frame.sample_rows.iter().take(crate::domain::MAX_SAMPLE_ROWS) {
                out.push_str(&format!("\n  {row}"));
            }
        }
        DataDetail::Ndarray { shape, dtype } => {
            out.push_str(&format!("\nshape: {}\ndtype: {dtype}", python_tuple(shape)));
        }
        DataDetail::Sequence { length } => {
            out.push_str(&format!("\nlength: {length}"));
        }
        DataDetail::Other => {}
    }
    out
}

/// Formats a shape the way Python prints a tuple: `()`, `(3,)`, `(3, 2)`.
pub fn python_tuple(items: &[u64]) -> String {
    match items {
        [] => "()".to_string(),
        [one] => format!("({one},)"),
        many => format!(
            "({})",
            many.iter().map(u64::to_string).collect::<Vec<_>>().join(", ")
        ),
    }
}

/// Renders with the bundled template.
pub fn render(
    variant: PromptVariant,
    record: &SnippetRecord,
    data_infos: &[DataInfo],
    exemplars: &[FewShotExemplar],
) -> Result<PromptBundle, PromptError> {
    PromptTemplate::default().render(variant, record, data_infos, exemplars)
}

pub fn render_data_section(info: &DataInfo) -> String {
    PromptTemplate::default().render_data_section(info)
}
