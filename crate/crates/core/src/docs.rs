//! Local documentation index over the subject libraries.
//!
//! Layout on disk: `root/index.json` lists entries; each entry's `file` is a
//! path relative to `root`, conventionally `<library>/<api>.md`.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::Directive;

#[derive(Debug, Error)]
pub enum DocIndexError {
    #[error("INDEX_SYNTAX: {0}")]
    Syntax(String),
    #[error("MISSING_DOC_FILE: {library}/{api} points to {path}")]
    MissingDocFile {
        library: String,
        api: String,
        path: PathBuf,
    },
    #[error("DUPLICATE_ENTRY: {library}/{api}")]
    DuplicateEntry { library: String, api: String },
}

impl DocIndexError {
    pub fn code(&self) -> &'static str {
        match self {
            DocIndexError::Syntax(_) => "INDEX_SYNTAX",
            DocIndexError::MissingDocFile { .. } => "MISSING_DOC_FILE",
            DocIndexError::DuplicateEntry { .. } => "DUPLICATE_ENTRY",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LookupError {
    NotFound(String),
    Ambiguous { query: String, candidates: Vec<String> },
}

impl std::fmt::Display for LookupError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LookupError::NotFound(q) => write!(f, "NOT_FOUND: no documentation for `{q}`"),
            LookupError::Ambiguous { query, candidates } => write!(
                f,
                "AMBIGUOUS: `{query}` matches {}",
                candidates.join(", ")
            ),
        }
    }
}

impl std::error::Error for LookupError {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocEntry {
    pub library: String,
    pub api: String,
    pub body: String,
    pub directives: Vec<Directive>,
}

impl DocEntry {
    pub fn qualified(&self) -> String {
        format!("{}:{}", self.library, self.api)
    }
}

#[derive(Debug, Deserialize)]
struct IndexDirective {
    text: String,
    #[serde(default)]
    parameter: Option<String>,
    #[serde(default)]
    source_url: Option<String>,
}

#[derive(Debug, Deserialize)]
struct IndexRow {
    library: String,
    api: String,
    file: PathBuf,
    #[serde(default)]
    directives: Vec<IndexDirective>,
}

#[derive(Debug, Clone, Default)]
pub struct DocIndex {
    entries: Vec<DocEntry>,
    libraries: BTreeSet<String>,
}

impl DocIndex {
    pub fn load(root: &Path) -> Result<Self, DocIndexError> {
        let index_path = root.join("index.json");
        let text = fs::read_to_string(&index_path)
            .map_err(|e| DocIndexError::Syntax(format!("{}: {e}", index_path.display())))?;
        let rows: Vec<IndexRow> = serde_json::from_str(&text)
            .map_err(|e| DocIndexError::Syntax(format!("{}: {e}", index_path.display())))?;
        let mut seen = HashSet::new();
        let mut entries = Vec::with_capacity(rows.len());
        for row in rows {
            if !seen.insert((row.library.clone(), row.api.clone())) {
                return Err(DocIndexError::DuplicateEntry {
                    library: row.library,
                    api: row.api,
                });
            }
            let path = root.join(&row.file);
            let body = fs::read_to_string(&path).map_err(|_| DocIndexError::MissingDocFile {
                library: row.library.clone(),
                api: row.api.clone(),
                path: path.clone(),
            })?;
            if body.trim().is_empty() {
                return Err(DocIndexError::Syntax(format!(
                    "{}/{} has an empty documentation body",
                    row.library, row.api
                )));
            }
            let directives = row
                .directives
                .into_iter()
                .map(|d| {
                    if d.text.trim().is_empty() {
                        return Err(DocIndexError::Syntax(format!(
                            "{}/{} has an empty directive",
                            row.library, row.api
                        )));
                    }
                    Ok(Directive {
                        api: row.api.clone(),
                        text: d.text,
                        parameter: d.parameter,
                        source_url: d.source_url,
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            entries.push(DocEntry {
                library: row.library,
                api: row.api,
                body,
                directives,
            });
        }
        Ok(Self::from_entries(entries))
    }

    pub fn from_entries(entries: Vec<DocEntry>) -> Self {
        let libraries = entries.iter().map(|e| e.library.clone()).collect();
        DocIndex { entries, libraries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn libraries(&self) -> &BTreeSet<String> {
        &self.libraries
    }

    pub fn knows_library(&self, library: &str) -> bool {
        self.libraries.contains(library)
    }

    pub fn entries(&self) -> &[DocEntry] {
        &self.entries
    }

    /// Resolves an API name: exact match first (optionally `library:api` or
    /// `library.api`), then a dotted-suffix match, then both again ignoring
    /// case.
    pub fn lookup(&self, api_name: &str) -> Result<&DocEntry, LookupError> {
        let query = api_name.trim();
        if query.is_empty() {
            return Err(LookupError::NotFound(api_name.to_string()));
        }
        for fold in [false, true] {
            let eq = |a: &str, b: &str| {
                if fold {
                    a.eq_ignore_ascii_case(b)
                } else {
                    a == b
                }
            };
            let exact: Vec<&DocEntry> = self
                .entries
                .iter()
                .filter(|e| {
                    eq(&e.api, query)
                        || eq(&format!("{}:{}", e.library, e.api), query)
                        || eq(&format!("{}.{}", e.library, e.api), query)
                })
                .collect();
            if let Some(found) = self.pick(query, exact)? {
                return Ok(found);
            }
            let suffix: Vec<&DocEntry> = self
                .entries
                .iter()
                .filter(|e| {
                    let api = &e.api;
                    if api.len() <= query.len() {
                        return false;
                    }
                    let cut = api.len() - query.len();
                    api.is_char_boundary(cut)
                        && api.as_bytes()[cut - 1] == b'.'
                        && eq(&api[cut..], query)
                })
                .collect();
            if let Some(found) = self.pick(query, suffix)? {
                return Ok(found);
            }
        }
        Err(LookupError::NotFound(query.to_string()))
    }

    fn pick<'a>(
        &self,
        query: &str,
        matches: Vec<&'a DocEntry>,
    ) -> Result<Option<&'a DocEntry>, LookupError> {
        match matches.len() {
            0 => Ok(None),
            1 => Ok(Some(matches[0])),
            _ => Err(LookupError::Ambiguous {
                query: query.to_string(),
                candidates: matches.iter().map(|e| e.qualified()).collect(),
            }),
        }
    }

    /// Directives for an API, empty when the API is unknown or ambiguous.
    pub fn directives_for(&self, api_name: &str) -> Vec<Directive> {
        self.lookup(api_name)
            .map(|e| e.directives.clone())
            .unwrap_or_default()
    }
}

pub fn load_index(root: &Path) -> Result<DocIndex, DocIndexError> {
    DocIndex::load(root)
}

pub fn lookup_api<'a>(index: &'a DocIndex, api_name: &str) -> Result<&'a DocEntry, LookupError> {
    index.lookup(api_name)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(library: &str, api: &str) -> DocEntry {
        DocEntry {
            library: library.into(),
            api: api.into(),
            body: format!("docs for {api}"),
            directives: vec![],
        }
    }

    fn index() -> DocIndex {
        DocIndex::from_entries(vec![
            entry("sklearn", "sklearn.impute.SimpleImputer"),
            entry("sklearn", "sklearn.impute.SimpleImputer.fit"),
            entry("matplotlib", "matplotlib.pyplot.plot"),
            entry("pandas", "pandas.DataFrame.plot"),
            entry("pandas", "pandas.DataFrame"),
        ])
    }

    #[test]
    fn suffix_resolution() {
        let idx = index();
        assert_eq!(idx.lookup("SimpleImputer").unwrap().api, "sklearn.impute.SimpleImputer");
        assert_eq!(
            idx.lookup("SimpleImputer.fit").unwrap().api,
            "sklearn.impute.SimpleImputer.fit"
        );
    }

    #[test]
    fn exact_beats_suffix() {
        let idx = DocIndex::from_entries(vec![entry("x", "plot"), entry("y", "y.plot")]);
        assert_eq!(idx.lookup("plot").unwrap().library, "x");
    }

    #[test]
    fn ambiguous_suffix_lists_candidates() {
        let err = index().lookup("plot").unwrap_err();
        match err {
            LookupError::Ambiguous { candidates, .. } => {
                assert_eq!(
                    candidates,
                    vec!["matplotlib:matplotlib.pyplot.plot", "pandas:pandas.DataFrame.plot"]
                );
            }
            other => panic!("expected ambiguity, got {other:?}"),
        }
    }

    #[test]
    fn case_insensitive_fallback() {
        assert_eq!(index().lookup("simpleimputer").unwrap().api, "sklearn.impute.SimpleImputer");
    }

    #[test]
    fn miss() {
        assert_eq!(
            index().lookup("definitely_not_an_api").unwrap_err(),
            LookupError::NotFound("definitely_not_an_api".into())
        );
        assert!(matches!(index().lookup("  "), Err(LookupError::NotFound(_))));
        // A partial token is not a dotted suffix.
        assert!(index().lookup("Imputer").is_err());
    }

    #[test]
    fn library_qualified_exact() {
        let idx = DocIndex::from_entries(vec![entry("a", "plot"), entry("b", "plot")]);
        assert!(matches!(idx.lookup("plot"), Err(LookupError::Ambiguous { .. })));
        assert_eq!(idx.lookup("b:plot").unwrap().library, "b");
    }

    #[test]
    fn load_errors() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("index.json"),
            r#"[{"library":"numpy","api":"numpy.a","file":"numpy/numpy.a.md"}]"#,
        )
        .unwrap();
        let err = DocIndex::load(dir.path()).unwrap_err();
        assert_eq!(err.code(), "MISSING_DOC_FILE");

        fs::create_dir_all(dir.path().join("numpy")).unwrap();
        fs::write(dir.path().join("numpy/numpy.a.md"), "A").unwrap();
        fs::write(
            dir.path().join("index.json"),
            r#"[{"library":"numpy","api":"numpy.a","file":"numpy/numpy.a.md"},{"library":"numpy","api":"numpy.a","file":"numpy/numpy.a.md"}]"#,
        )
        .unwrap();
        assert_eq!(DocIndex::load(dir.path()).unwrap_err().code(), "DUPLICATE_ENTRY");

        fs::write(dir.path().join("index.json"), "{").unwrap();
        assert_eq!(DocIndex::load(dir.path()).unwrap_err().code(), "INDEX_SYNTAX");
    }
}
