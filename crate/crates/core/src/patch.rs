//! Unified-diff parsing, application with bounded offset fuzz, and reversal.
//!
//! Accepted dialect: optional `---`/`+++` file headers (with or without the
//! `a/` and `b/` prefixes), standard `@@ -l,c +l,c @@` hunk headers, and hunk
//! bodies of ` `, `-`, `+` lines. Model-written diffs frequently carry wrong
//! line counts, so counts are recomputed from the body; the stated start lines
//! are used as the anchor for matching.

use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

pub const DEFAULT_FUZZ: usize = 3;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum PatchError {
    #[error("DIFF_SYNTAX: {0}")]
    DiffSyntax(String),
    #[error("HUNK_MISMATCH: hunk {index} does not match near line {expected_line}")]
    HunkMismatch { index: usize, expected_line: usize },
}

impl PatchError {
    pub fn code(&self) -> &'static str {
        match self {
            PatchError::DiffSyntax(_) => "DIFF_SYNTAX",
            PatchError::HunkMismatch { .. } => "HUNK_MISMATCH",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HunkLine {
    Context(String),
    Remove(String),
    Add(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hunk {
    pub old_start: usize,
    pub new_start: usize,
    /// Trailing text after the closing `@@`, usually a function name.
    pub section: String,
    pub lines: Vec<HunkLine>,
}

impl Hunk {
    pub fn old_len(&self) -> usize {
        self.lines
            .iter()
            .filter(|l| !matches!(l, HunkLine::Add(_)))
            .count()
    }

    pub fn new_len(&self) -> usize {
        self.lines
            .iter()
            .filter(|l| !matches!(l, HunkLine::Remove(_)))
            .count()
    }

    fn old_lines(&self) -> Vec<&str> {
        self.lines
            .iter()
            .filter_map(|l| match l {
                HunkLine::Context(s) | HunkLine::Remove(s) => Some(s.as_str()),
                HunkLine::Add(_) => None,
            })
            .collect()
    }

    fn new_lines(&self) -> Vec<String> {
        self.lines
            .iter()
            .filter_map(|l| match l {
                HunkLine::Context(s) | HunkLine::Add(s) => Some(s.clone()),
                HunkLine::Remove(_) => None,
            })
            .collect()
    }

    /// 0-based index in the old text where this hunk's old lines begin.
    fn anchor(&self) -> usize {
        if self.old_len() == 0 {
            // `-N,0` means "insert after line N".
            self.old_start
        } else {
            self.old_start.saturating_sub(1)
        }
    }

    fn reversed(&self) -> Hunk {
        Hunk {
            old_start: self.new_start,
            new_start: self.old_start,
            section: self.section.clone(),
            lines: self
                .lines
                .iter()
                .map(|l| match l {
                    HunkLine::Context(s) => HunkLine::Context(s.clone()),
                    HunkLine::Remove(s) => HunkLine::Add(s.clone()),
                    HunkLine::Add(s) => HunkLine::Remove(s.clone()),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnifiedDiff {
    pub old_path: Option<String>,
    pub new_path: Option<String>,
    pub hunks: Vec<Hunk>,
}

fn hunk_header_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@ ?(.*)$").expect("valid regex")
    })
}

fn strip_path_prefix(raw: &str) -> String {
    // Drop any tab-separated timestamp, then the conventional a/ b/ prefix.
    let path = raw.split('\t').next().unwrap_or("").trim();
    path.strip_prefix("a/")
        .or_else(|| path.strip_prefix("b/"))
        .unwrap_or(path)
        .to_string()
}

fn is_body_line(line: &str) -> bool {
    line.starts_with(' ') || line.starts_with('-') || line.starts_with('+')
}

impl UnifiedDiff {
    pub fn parse(text: &str) -> Result<Self, PatchError> {
        let normalized = text.replace("\r\n", "\n");
        let lines: Vec<&str> = normalized.split('\n').collect();
        let mut old_path = None;
        let mut new_path = None;
        let mut hunks = Vec::new();
        let mut i = 0;
        while i < lines.len() {
            let line = lines[i];
            if let Some(rest) = line.strip_prefix("--- ") {
                if lines.get(i + 1).is_some_and(|l| l.starts_with("+++ ")) {
                    if !hunks.is_empty() {
                        return Err(PatchError::DiffSyntax(
                            "multi-file patches are not supported".into(),
                        ));
                    }
                    old_path = Some(strip_path_prefix(rest));
                    new_path = Some(strip_path_prefix(&lines[i + 1][4..]));
                    i += 2;
                    continue;
                }
            }
            if line.starts_with("@@") {
                let caps = hunk_header_re().captures(line).ok_or_else(|| {
                    PatchError::DiffSyntax(format!("bad hunk header `{line}`"))
                })?;
                let num = |idx: usize| -> usize {
                    caps.get(idx)
                        .map(|m| m.as_str().parse().unwrap_or(usize::MAX))
                        .unwrap_or(1)
                };
                let old_start = num(1);
                let new_start = num(3);
                if old_start == usize::MAX || new_start == usize::MAX {
                    return Err(PatchError::DiffSyntax(format!("bad hunk header `{line}`")));
                }
                let section = caps.get(5).map_or("", |m| m.as_str()).to_string();
                i += 1;
                let body_start = i;
                // A hunk body runs until the next header, a file header pair,
                // or a line that cannot belong to a hunk. Blank lines count as
                // empty context lines only when more body follows them.
                let mut end = i;
                let mut j = i;
                while j < lines.len() {
                    let l = lines[j];
                    if l.starts_with("@@")
                        || (l.starts_with("--- ")
                            && lines.get(j + 1).is_some_and(|n| n.starts_with("+++ ")))
                    {
                        break;
                    }
                    if is_body_line(l) || l.starts_with('\\') {
                        end = j + 1;
                    } else if !l.is_empty() {
                        break;
                    }
                    j += 1;
                }
                let mut body = Vec::new();
                for l in &lines[body_start..end] {
                    if l.starts_with('\\') {
                        continue;
                    }
                    if l.is_empty() {
                        body.push(HunkLine::Context(String::new()));
                        continue;
                    }
                    let (tag, rest) = l.split_at(1);
                    body.push(match tag {
                        " " => HunkLine::Context(rest.to_string()),
                        "-" => HunkLine::Remove(rest.to_string()),
                        _ => HunkLine::Add(rest.to_string()),
                    });
                }
                if body.is_empty() {
                    return Err(PatchError::DiffSyntax(format!(
                        "hunk {} has an empty body",
                        hunks.len() + 1
                    )));
                }
                hunks.push(Hunk {
                    old_start,
                    new_start,
                    section,
                    lines: body,
                });
                i = end;
                continue;
            }
            i += 1;
        }
        if hunks.is_empty() {
            return Err(PatchError::DiffSyntax("diff contains no hunks".into()));
        }
        Ok(UnifiedDiff {
            old_path,
            new_path,
            hunks,
        })
    }

    pub fn reversed(&self) -> UnifiedDiff {
        UnifiedDiff {
            old_path: self.new_path.clone(),
            new_path: self.old_path.clone(),
            hunks: self.hunks.iter().map(Hunk::reversed).collect(),
        }
    }

    /// Applies every hunk or none.
    pub fn apply(&self, original: &str, fuzz: usize) -> Result<String, PatchError> {
        let crlf = original.contains("\r\n");
        let text = if crlf {
            original.replace("\r\n", "\n")
        } else {
            original.to_string()
        };
        // An empty text has no last line to terminate; treat it as terminated.
        let trailing_newline = text.is_empty() || text.ends_with('\n');
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();

        // Shift between the old text's numbering and the working buffer.
        let mut offset: isize = 0;
        let mut floor = 0usize;
        for (idx, hunk) in self.hunks.iter().enumerate() {
            let old = hunk.old_lines();
            let expected = hunk.anchor() as isize + offset;
            let mut found = None;
            for delta in fuzz_order(fuzz) {
                let start = expected + delta;
                if start < floor as isize {
                    continue;
                }
                let start = start as usize;
                if start + old.len() > lines.len() {
                    continue;
                }
                if lines[start..start + old.len()]
                    .iter()
                    .zip(&old)
                    .all(|(have, want)| have == want)
                {
                    found = Some(start);
                    break;
                }
            }
            let start = found.ok_or(PatchError::HunkMismatch {
                index: idx + 1,
                expected_line: hunk.old_start,
            })?;
            let replacement = hunk.new_lines();
            let inserted = replacement.len();
            lines.splice(start..start + old.len(), replacement);
            offset += (start as isize - expected) + inserted as isize - old.len() as isize;
            floor = start + inserted;
        }

        let sep = if crlf { "\r\n" } else { "\n" };
        let mut out = lines.join(sep);
        if trailing_newline && !lines.is_empty() {
            out.push_str(sep);
        }
        Ok(out)
    }
}

fn fuzz_order(fuzz: usize) -> impl Iterator<Item = isize> {
    std::iter::once(0).chain((1..=fuzz as isize).flat_map(|d| [-d, d]))
}

impl fmt::Display for UnifiedDiff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let (Some(old), Some(new)) = (&self.old_path, &self.new_path) {
            writeln!(f, "--- a/{old}")?;
            writeln!(f, "+++ b/{new}")?;
        }
        for h in &self.hunks {
            write!(
                f,
                "@@ -{},{} +{},{} @@",
                h.old_start,
                h.old_len(),
                h.new_start,
                h.new_len()
            )?;
            if !h.section.is_empty() {
                write!(f, " {}", h.section)?;
            }
            writeln!(f)?;
            for l in &h.lines {
                match l {
                    HunkLine::Context(s) => writeln!(f, " {s}")?,
                    HunkLine::Remove(s) => writeln!(f, "-{s}")?,
                    HunkLine::Add(s) => writeln!(f, "+{s}")?,
                }
            }
        }
        Ok(())
    }
}

pub fn apply_patch(original: &str, diff: &str) -> Result<String, PatchError> {
    apply_patch_with_fuzz(original, diff, DEFAULT_FUZZ)
}

pub fn apply_patch_with_fuzz(original: &str, diff: &str, fuzz: usize) -> Result<String, PatchError> {
    if diff.trim().is_empty() {
        return Err(PatchError::DiffSyntax("empty diff".into()));
    }
    UnifiedDiff::parse(diff)?.apply(original, fuzz)
}

pub fn reverse_patch(diff: &str) -> Result<String, PatchError> {
    Ok(UnifiedDiff::parse(diff)?.reversed().to_string())
}
