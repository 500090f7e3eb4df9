//! Prompt rendering: variant degeneracy and the rendered smoke prompts.

mod support;

use std::path::{Path, PathBuf};

use dschecker_core::domain::load_dataset;
use dschecker_core::gateway::{default_tools, http::wire_tools};
use dschecker_core::prompt::{render, PromptVariant};
use dschecker_core::runtime::protocol::parse_probe_line;
use support::prompts::without_directives;

fn text(variant: PromptVariant, rec: &dschecker_core::domain::SnippetRecord, infos: &[dschecker_core::domain::DataInfo]) -> String {
    let b = render(variant, rec, infos, &[]).unwrap();
    format!("{}\n----\n{}", b.system_text, b.user_text)
}

#[test]
fn without_directives_full_is_data_and_dir_is_base() {
    let records = without_directives();
    assert!(records.len() >= 10);
    for (rec, infos) in &records {
        assert!(rec.directives.is_empty());
        assert_eq!(text(PromptVariant::Full, rec, infos), text(PromptVariant::Data, rec, infos), "{}", rec.id);
        assert_eq!(text(PromptVariant::Dir, rec, infos), text(PromptVariant::Base, rec, infos), "{}", rec.id);
    }
}

#[test]
fn data_sections_only_appear_when_asked_for() {
    for (rec, infos) in without_directives().iter().filter(|(_, i)| !i.is_empty()) {
        let base = text(PromptVariant::Base, rec, infos);
        let data = text(PromptVariant::Data, rec, infos);
        assert_ne!(base, data, "{}", rec.id);
        for info in infos {
            assert!(data.contains(&info.target.variable_name), "{}", rec.id);
        }
    }
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Compares against a checked-in file; `BLESS=1` rewrites it instead.
fn check_golden(name: &str, actual: &str) {
    let path = golden(name);
    if std::env::var_os("BLESS").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "{name} drifted; rerun with BLESS=1 if intended");
}

// The df record the probe reports for the smoke misuse snippet.
const FIG1_PROBE: &str = r#"@@PROBE {"v":1,"variable":"df","line":4,"type_name":"DataFrame","kind":"FRAME","detail":{"columns":[{"name":"A","dtype":"float64","non_null":3},{"name":"B","dtype":"float64","non_null":0}],"row_count":4,"sample_rows":["0 1.0 NaN","1 2.0 NaN","2 3.0 NaN"]}}"#;

#[test]
fn fig1_prompts_match_golden() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/smoke/manifest.jsonl");
    let dataset = load_dataset(&manifest).unwrap();
    let rec = dataset.get("fig1_misuse").unwrap();
    let info = parse_probe_line(FIG1_PROBE).unwrap();
    check_golden("fig1_base.txt", &text(PromptVariant::Base, rec, &[]));
    check_golden("fig1_full.txt", &text(PromptVariant::Full, rec, &[info]));
}

#[test]
fn tool_declarations_match_golden() {
    let wire = serde_json::to_string_pretty(&wire_tools(&default_tools())).unwrap() + "\n";
    check_golden("tools_wire.json", &wire);
}
