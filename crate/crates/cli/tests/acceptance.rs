//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on failure.

#[path = "../../core/tests/support/diffgen.rs"]
mod diffgen;
#[path = "../../core/tests/support/prompts.rs"]
mod prompts;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use clap::Parser;
use dschecker_cli::{run, Cli};
use dschecker_core::agent::{run_agent, AgentConfig};
use dschecker_core::docs::load_index;
use dschecker_core::domain::{load_dataset, Correctness, GenerationParams};
use dschecker_core::gateway::{
    ChatMessage, ChatProvider, Gateway, GatewayError, RawToolCall, RawTurn, Role, ToolDeclaration,
};
use dschecker_core::patch::{apply_patch, apply_patch_with_fuzz, reverse_patch};
use dschecker_core::prompt::{render, PromptTemplate, PromptVariant};
use dschecker_core::runtime::{ExecRequest, Interpreter, RawExecution, RuntimeError};
use dschecker_core::stats::{detection_metrics, dunn_test, fix_rate, shapiro_wilk, ConfusionCounts};
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use serde_json::Value;

type Outcome = Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Outcome {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn smoke(name: &str) -> PathBuf {
    root().join("data/smoke").join(name)
}

// ---- 1: detection metrics -------------------------------------------------

/// Reported precision, recall and F1 (percent) over all records, for three
/// models and five prompt variants. 39 misuses, 76 records.
const REPORTED: [(&str, &str, f64, f64, f64); 15] = [
    ("4o-mini", "base", 45.65, 53.85, 49.41),
    ("4o-mini", "data", 37.04, 51.28, 43.01),
    ("4o-mini", "dir", 38.46, 51.28, 43.96),
    ("4o-mini", "full", 33.33, 46.15, 38.71),
    ("4o-mini", "fewshot", 41.67, 64.10, 50.51),
    ("4o", "base", 48.78, 51.28, 50.00),
    ("4o", "data", 51.16, 56.41, 53.66),
    ("4o", "dir", 52.38, 56.41, 54.32),
    ("4o", "full", 55.00, 56.41, 55.70),
    ("4o", "fewshot", 57.14, 61.54, 59.26),
    ("llama", "base", 48.89, 56.41, 52.38),
    ("llama", "data", 50.00, 48.72, 49.35),
    ("llama", "dir", 52.17, 61.54, 56.47),
    ("llama", "full", 56.52, 66.67, 61.18),
    ("llama", "fewshot", 56.82, 64.10, 60.24),
];
const MISUSES: u64 = 39;
const RECORDS: u64 = 76;
const PP: f64 = 0.005;

/// The integer counts consistent with a printed precision and recall.
fn counts_for(p: f64, r: f64) -> Vec<(u64, u64)> {
    let close = |num: u64, den: u64, target: f64| (100.0 * num as f64 / den as f64 - target).abs() <= PP;
    let mut found = Vec::new();
    for tp in (1..=MISUSES).filter(|&tp| close(tp, MISUSES, r)) {
        for flagged in (tp..=RECORDS).filter(|&f| close(tp, f, p)) {
            found.push((tp, flagged));
        }
    }
    found
}

fn criterion_1() -> Outcome {
    for (model, prompt, p, r, f1) in REPORTED {
        let found = counts_for(p, r);
        ensure(found.len() == 1, || format!("{model}/{prompt}: counts {found:?}"))?;
        let (tp, flagged) = found[0];
        let m = detection_metrics(&ConfusionCounts {
            tp,
            flagged,
            total_misuses: MISUSES,
            total_records: RECORDS,
        })
        .map_err(|e| e.to_string())?;
        for (what, got, want) in [("P", m.precision, p), ("R", m.recall, r), ("F1", m.f1, f1)] {
            ensure((100.0 * got - want).abs() <= PP, || {
                format!("{model}/{prompt} tp={tp} flagged={flagged}: {what} {:.4} vs {want}", 100.0 * got)
            })?;
        }
    }
    let rate = fix_rate(20, MISUSES).map_err(|e| e.to_string())?;
    ensure((100.0 * rate - 51.28).abs() <= PP, || format!("fix rate {rate}"))
}

// ---- 2: prompt degeneracy -------------------------------------------------

fn criterion_2() -> Outcome {
    let records = prompts::without_directives();
    ensure(records.len() >= 10, || format!("only {} records", records.len()))?;
    let text = |v, rec, infos: &[_]| {
        render(v, rec, infos, &[]).map(|b| (b.system_text, b.user_text)).map_err(|e| e.to_string())
    };
    for (rec, infos) in &records {
        ensure(rec.directives.is_empty(), || format!("{} has directives", rec.id))?;
        ensure(text(PromptVariant::Full, rec, infos)? == text(PromptVariant::Data, rec, infos)?, || {
            format!("{}: full differs from data", rec.id)
        })?;
        ensure(text(PromptVariant::Dir, rec, infos)? == text(PromptVariant::Base, rec, infos)?, || {
            format!("{}: dir differs from base", rec.id)
        })?;
    }
    Ok(())
}

// ---- 3: patch round trip --------------------------------------------------

fn criterion_3() -> Outcome {
    let mut runner = TestRunner::new_with_rng(
        Config {
            cases: 100,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    );
    let cases = AtomicUsize::new(0);
    runner
        .run(&diffgen::patched_pair(), |(old, new, diff)| {
            cases.fetch_add(1, Ordering::Relaxed);
            let forward = apply_patch_with_fuzz(&old, &diff, 0).map_err(|e| e.to_string());
            proptest::prop_assert_eq!(forward.as_deref(), Ok(new.as_str()));
            let back = reverse_patch(&diff).and_then(|r| apply_patch_with_fuzz(&new, &r, 0));
            proptest::prop_assert_eq!(back.map_err(|e| e.to_string()), Ok(old));
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    let n = cases.load(Ordering::Relaxed);
    ensure(n >= 100, || format!("only {n} generated pairs"))?;

    let read = |p: PathBuf| std::fs::read_to_string(&p).map_err(|e| format!("{}: {e}", p.display()));
    let patched = apply_patch(&read(smoke("fig1_misuse.py"))?, &read(smoke("fig1.diff"))?).map_err(|e| e.to_string())?;
    ensure(patched == read(smoke("fig1_correct.py"))?, || format!("fig1 patch gave:\n{patched}"))
}

// ---- 4: statistics against reference values ------------------------------

fn criterion_4() -> Outcome {
    let path = root().join("crates/core/tests/fixtures/stats_oracle.json");
    let oracle: Value = serde_json::from_str(&std::fs::read_to_string(&path).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let floats = |v: &Value| -> Vec<f64> { v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect() };

    let sw = oracle["shapiro_wilk"].as_array().unwrap();
    let n50 = sw.iter().filter(|c| c["xs"].as_array().unwrap().len() == 50).count();
    ensure(n50 >= 5, || format!("{n50} Shapiro-Wilk samples of 50"))?;
    for case in sw {
        let xs = floats(&case["xs"]);
        let r = shapiro_wilk(&xs).map_err(|e| e.to_string())?;
        let (w, p) = (case["w"].as_f64().unwrap(), case["p"].as_f64().unwrap());
        ensure((r.w - w).abs() <= 1e-6 && (r.p - p).abs() <= 1e-6, || {
            format!("{}: W {} p {} vs W {w} p {p}", case["name"], r.w, r.p)
        })?;
    }

    let dunn = oracle["dunn"].as_array().unwrap();
    ensure(dunn.len() == 3, || format!("{} Dunn group sets", dunn.len()))?;
    let mut saw_ties = false;
    for case in dunn {
        let groups: Vec<Vec<f64>> = case["groups"].as_array().unwrap().iter().map(floats).collect();
        let mut all: Vec<f64> = groups.concat();
        all.sort_by(f64::total_cmp);
        saw_ties |= all.windows(2).any(|w| w[0] == w[1]);
        let got = dunn_test(&groups).map_err(|e| e.to_string())?;
        let want = case["pairs"].as_array().unwrap();
        ensure(got.len() == want.len(), || format!("{}: {} pairs", case["name"], got.len()))?;
        for (g, e) in got.iter().zip(want) {
            let adj = e["p_adjusted"].as_f64().unwrap();
            ensure((g.p_adjusted - adj).abs() <= 1e-4, || {
                format!("{} ({},{}): adjusted p {} vs {adj}", case["name"], g.i, g.j, g.p_adjusted)
            })?;
        }
    }
    ensure(saw_ties, || "no group set has tied ranks".into())
}

// ---- 5 and 7: eval through the command line ------------------------------

fn dschecker(args: &[&str]) -> Result<String, String> {
    let cli = Cli::try_parse_from(std::iter::once("dschecker").chain(args.iter().copied()))
        .map_err(|e| e.to_string())?;
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run(&cli, &mut out, &mut err);
    let text = String::from_utf8_lossy(&out).into_owned();
    ensure(code == 0, || format!("exit {code}: {}", String::from_utf8_lossy(&err)))?;
    Ok(text)
}

fn smoke_eval(seed: u64, out: &Path) -> Result<String, String> {
    let s = |p: PathBuf| p.to_string_lossy().into_owned();
    dschecker(&[
        "eval",
        "--dataset",
        &s(smoke("manifest.jsonl")),
        "--configs",
        &s(smoke("eval.json")),
        "--adjudications",
        &s(smoke("adjudications.json")),
        "--docs",
        &s(root().join("data/docs")),
        "--seed",
        &seed.to_string(),
        "--out",
        &s(out.to_path_buf()),
    ])?;
    std::fs::read_to_string(out).map_err(|e| e.to_string())
}

/// Twelve records whose replayed verdicts mix hits and misses, so that
/// resamples differ from each other and from seed to seed.
fn mixed_dataset(dir: &Path) -> Result<(PathBuf, PathBuf), String> {
    let io = |e: std::io::Error| e.to_string();
    let transcripts = dir.join("transcripts");
    std::fs::create_dir_all(&transcripts).map_err(io)?;
    let no = r#"{"correct": "no", "patch": "@@ -1 +1 @@\n-absent line\n+x = 2\n", "explanation": "wrong"}"#;
    let yes = r#"{"correct": "yes"}"#;
    let mut manifest = String::new();
    for k in 0..12 {
        let id = format!("r{k:02}");
        let misuse = k < 8;
        let flagged = matches!(k, 0..=4 | 8);
        std::fs::write(dir.join(format!("{id}.py")), format!("x = {k}\n")).map_err(io)?;
        let mut rec = serde_json::json!({
            "id": id,
            "snippet_path": format!("{id}.py"),
            "library": "numpy",
            "target_api": "numpy.reshape",
            "ground_truth": if misuse { "MISUSE" } else { "CORRECT" },
        });
        if misuse {
            rec["misuse_description"] = "synthetic".into();
            rec["expectation"] = serde_json::json!({"error_signature": {"exception_class": "ValueError"}});
        }
        manifest += &format!("{rec}\n");
        let transcript = serde_json::json!({
            "format": "dschecker-llm-transcript",
            "version": 1,
            "conversation_id": id,
            "exchanges": [{"turn": {"final_text": if flagged { no } else { yes }}}],
        });
        std::fs::write(transcripts.join(format!("{id}.json")), transcript.to_string()).map_err(io)?;
    }
    std::fs::write(dir.join("manifest.jsonl"), manifest).map_err(io)?;
    let configs = serde_json::json!({"configurations": [
        {"name": "a", "method": "base", "model": "m", "transcripts": "transcripts"},
        {"name": "b", "method": "dir", "model": "m", "transcripts": "transcripts"},
    ]});
    std::fs::write(dir.join("eval.json"), configs.to_string()).map_err(io)?;
    Ok((dir.join("manifest.jsonl"), dir.join("eval.json")))
}

fn mixed_eval(manifest: &Path, configs: &Path, seed: u64, out: &Path) -> Result<String, String> {
    let s = |p: &Path| p.to_string_lossy().into_owned();
    dschecker(&[
        "eval",
        "--dataset",
        &s(manifest),
        "--configs",
        &s(configs),
        "--mode",
        "raw",
        "--seed",
        &seed.to_string(),
        "--out",
        &s(out),
    ])?;
    std::fs::read_to_string(out).map_err(|e| e.to_string())
}

/// Both reports agree everywhere except the statistics section, which differs.
fn only_statistics_differ(a: &str, b: &str, what: &str) -> Outcome {
    let parse = |t: &str| serde_json::from_str::<Value>(t).map_err(|e| e.to_string());
    let (mut a, mut b) = (parse(a)?, parse(b)?);
    let (sa, sb) = (a["statistics"].take(), b["statistics"].take());
    ensure(a == b, || format!("{what}: a section other than statistics changed with the seed"))?;
    ensure(sa["seed"] != sb["seed"], || format!("{what}: seed not recorded"))?;
    Ok(())
}

fn criterion_5() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = smoke_eval(7, &tmp.path().join("a.json"))?;
    let second = smoke_eval(7, &tmp.path().join("b.json"))?;
    ensure(first == second, || "smoke reports differ under the same seed".into())?;
    let other = smoke_eval(8, &tmp.path().join("c.json"))?;
    only_statistics_differ(&first, &other, "smoke")?;

    let (manifest, configs) = mixed_dataset(tmp.path())?;
    let m1 = mixed_eval(&manifest, &configs, 7, &tmp.path().join("m1.json"))?;
    let m2 = mixed_eval(&manifest, &configs, 7, &tmp.path().join("m2.json"))?;
    ensure(m1 == m2, || "mixed reports differ under the same seed".into())?;
    let m3 = mixed_eval(&manifest, &configs, 8, &tmp.path().join("m3.json"))?;
    only_statistics_differ(&m1, &m3, "mixed")?;
    let boot = |t: &str| serde_json::from_str::<Value>(t).map(|v| v["statistics"]["bootstrap"].clone());
    ensure(boot(&m1).map_err(|e| e.to_string())? != boot(&m3).map_err(|e| e.to_string())?, || {
        "bootstrap vectors did not change with the seed".into()
    })
}

fn criterion_7() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let report: Value = serde_json::from_str(&smoke_eval(7, &tmp.path().join("r.json"))?).map_err(|e| e.to_string())?;
    let configs = report["configurations"].as_array().unwrap();
    ensure(configs.len() == 3, || format!("{} configurations", configs.len()))?;
    for c in configs {
        let all = &c["all"];
        for key in ["precision", "recall", "f1", "fix_rate"] {
            ensure(all[key].as_f64() == Some(1.0), || format!("{}: {key} = {}", c["name"], all[key]))?;
        }
        let misuse = c["outcomes"]
            .as_array()
            .unwrap()
            .iter()
            .find(|o| o["id"] == "fig1_misuse")
            .ok_or("no fig1_misuse outcome")?;
        ensure(misuse["fix"]["classification"] == "FIXED", || format!("{}: fix {}", c["name"], misuse["fix"]))?;
    }
    Ok(())
}

// ---- 6: agent bounds ------------------------------------------------------

/// Plays back turns in order, repeating the last one forever, and keeps the
/// conversation it saw on each call.
struct Scripted {
    turns: Vec<RawTurn>,
    seen: Mutex<Vec<Vec<ChatMessage>>>,
}

impl ChatProvider for Scripted {
    fn complete_raw(
        &self,
        _: &str,
        messages: &[ChatMessage],
        _: &[ToolDeclaration],
        _: &GenerationParams,
    ) -> Result<RawTurn, GatewayError> {
        let mut seen = self.seen.lock().unwrap();
        seen.push(messages.to_vec());
        Ok(self.turns[(seen.len() - 1).min(self.turns.len() - 1)].clone())
    }

    fn is_offline(&self) -> bool {
        true
    }
}

struct NoInterpreter;

impl Interpreter for NoInterpreter {
    fn execute(&self, _: &ExecRequest) -> Result<RawExecution, RuntimeError> {
        Err(RuntimeError::InterpreterNotFound("none in this test".into()))
    }
}

fn doc_call() -> RawTurn {
    RawTurn::ToolCalls(vec![RawToolCall {
        id: String::new(),
        name: "get_api_documentation".into(),
        arguments: serde_json::json!({"api_name": "SimpleImputer"}),
    }])
}

fn criterion_6() -> Outcome {
    let dataset = load_dataset(&smoke("manifest.jsonl")).map_err(|e| e.to_string())?;
    let record = dataset.get("fig1_misuse").ok_or("no fig1_misuse")?;
    let index = load_index(&root().join("data/docs")).map_err(|e| e.to_string())?;
    let template = PromptTemplate::default();
    let params = GenerationParams::new("scripted");

    let max_iterations = 4;
    let always = Arc::new(Scripted {
        turns: vec![doc_call()],
        seen: Mutex::new(Vec::new()),
    });
    let config = AgentConfig {
        max_iterations,
        ..AgentConfig::default()
    };
    let err = run_agent(record, &index, &Gateway::new(always.clone()), &NoInterpreter, &template, &params, &config)
        .err()
        .ok_or("always-calling script produced a verdict")?;
    ensure(err.code() == "AGENT_EXHAUSTED", || format!("got {err}"))?;
    let seen = always.seen.lock().unwrap();
    ensure(seen.len() == max_iterations + 1, || format!("{} model turns", seen.len()))?;
    let last = seen.last().unwrap();
    let results = last.iter().filter(|m| m.role == Role::ToolResult).count();
    ensure(results == max_iterations, || format!("{results} tool rounds"))?;
    let nudge = last.last().unwrap();
    ensure(nudge.role == Role::User && nudge.content == template.nudge_text(), || {
        "final turn was not preceded by the nudge".into()
    })?;

    let verdict = std::fs::read_to_string(smoke("transcripts/full/fig1_misuse.json")).map_err(|e| e.to_string())?;
    let verdict: Value = serde_json::from_str(&verdict).map_err(|e| e.to_string())?;
    let final_text = verdict["exchanges"][0]["turn"]["final_text"].as_str().ok_or("no final text")?.to_string();
    let two_turn = Arc::new(Scripted {
        turns: vec![doc_call(), RawTurn::FinalText(final_text)],
        seen: Mutex::new(Vec::new()),
    });
    let out = run_agent(record, &index, &Gateway::new(two_turn), &NoInterpreter, &template, &params, &AgentConfig::default())
        .map_err(|e| e.to_string())?;
    ensure(out.verdict.correct == Correctness::No, || "verdict is not NO".into())?;
    ensure(out.call_log.len() == 1, || format!("{} logged calls", out.call_log.len()))?;
    ensure(out.call_log.entries[0].relevant == Some(true), || "doc call not tagged relevant".into())
}

// ---- harness --------------------------------------------------------------

fn main() {
    // Nothing here may reach a model or a live interpreter.
    for var in ["DSCHECKER_API_KEY", "DSCHECKER_API_BASE", "DSCHECKER_MODEL", "DSCHECKER_PROBE_SHIM"] {
        std::env::remove_var(var);
    }
    std::env::set_var("DSCHECKER_INTERPRETER", "/nonexistent/acceptance-python");

    let criteria: [(&str, u64, fn() -> Outcome); 7] = [
        ("metrics reproduce the reported detection table", 1_000, criterion_1),
        ("prompt variants degenerate without directives", 1_000, criterion_2),
        ("patch round trip and the smoke SimpleImputer fix", 5_000, criterion_3),
        ("Shapiro-Wilk and Dunn match reference values", 5_000, criterion_4),
        ("seeded eval is byte-identical; the seed moves only statistics", 10_000, criterion_5),
        ("agent loop bounds and call log", 1_000, criterion_6),
        ("smoke replay scores 100% with a recorded FIXED", 5_000, criterion_7),
    ];
    let mut failed = 0;
    for (n, (name, budget_ms, check)) in criteria.into_iter().enumerate() {
        let started = Instant::now();
        let result = match catch_unwind(AssertUnwindSafe(check)) {
            Ok(r) => r,
            Err(panic) => Err(panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        let took = started.elapsed();
        let result = result.and_then(|()| {
            ensure(took <= Duration::from_millis(budget_ms), || format!("took {took:?}, budget {budget_ms} ms"))
        });
        match result {
            Ok(()) => println!("criterion {}: PASS  {name} ({} ms)", n + 1, took.as_millis()),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {why}", n + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
