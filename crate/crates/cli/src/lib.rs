//! The `dschecker` command line: check, fix, agent, probe and eval.

pub mod exit;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use dschecker_core::agent::{run_agent, AgentConfig, DEFAULT_MAX_ITERATIONS};
use dschecker_core::docs::DocIndex;
use dschecker_core::domain::{load_dataset, Dataset, GenerationParams, ProbeTarget, SnippetRecord, Verdict};
use dschecker_core::eval::{
    evaluate, load_adjudications, EvalConfigFile, EvalOptions, EvalShared, Method, Runner,
};
use dschecker_core::gateway::{
    Gateway, HttpProvider, RecordingProvider, ReplayProvider, API_BASE_ENV, API_KEY_ENV, MODEL_ENV,
};
use dschecker_core::gateway::http::DEFAULT_API_BASE;
use dschecker_core::patch::{apply_patch_with_fuzz, DEFAULT_FUZZ};
use dschecker_core::pipeline::{attach_directives, check_record, validate_fix, CheckContext, Error};
use dschecker_core::prompt::{
    load_exemplars, render_data_body, FewShotExemplar, PromptTemplate, PromptVariant,
};
use dschecker_core::runtime::{
    collect_data_info, ExecTranscript, FixClassification, Interpreter, RecordingInterpreter,
    ReplayInterpreter, SubprocessInterpreter, DEFAULT_TIMEOUT_MS,
};
use dschecker_core::runtime::interpreter::INTERPRETER_ENV;
use dschecker_core::stats::bootstrap::{DEFAULT_RESAMPLES, DEFAULT_SAMPLE_SIZE};
use dschecker_core::stats::{AdjudicationMode, BootstrapConfig};

pub const DEFAULT_MODEL: &str = "gpt-4o";

#[derive(Debug, Parser)]
#[command(name = "dschecker", version, about = "Find and repair API misuses in data-science snippets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ask the model whether a snippet misuses an API.
    Check(CheckArgs),
    /// Check a snippet, then apply and optionally validate the proposed patch.
    Fix(FixArgs),
    /// Let the model inspect variables and documentation before answering.
    Agent(AgentArgs),
    /// Describe a variable's runtime value at a line.
    Probe(ProbeArgs),
    /// Evaluate configurations over a dataset.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct SnippetArgs {
    /// Snippet file to analyze.
    #[arg(long, required_unless_present = "dataset_record", conflicts_with = "dataset_record")]
    pub snippet: Option<PathBuf>,
    /// Library the snippet targets (required with --snippet).
    #[arg(long, required_unless_present = "dataset_record")]
    pub library: Option<String>,
    /// Dataset manifest holding --dataset-record.
    #[arg(long, requires = "dataset_record")]
    pub dataset: Option<PathBuf>,
    /// Id of a record in --dataset.
    #[arg(long, requires = "dataset")]
    pub dataset_record: Option<String>,
    /// Fully qualified API under review, used to look up directives.
    #[arg(long)]
    pub target_api: Option<String>,
    /// Data file the snippet reads (repeatable).
    #[arg(long = "data-file")]
    pub data_files: Vec<PathBuf>,
    /// Variable to describe, as NAME@LINE (repeatable; replaces the record's targets).
    #[arg(long = "probe", value_parser = parse_probe_target)]
    pub probes: Vec<ProbeTarget>,
    /// Documentation directory with an index.json.
    #[arg(long)]
    pub docs: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, env = MODEL_ENV, default_value = DEFAULT_MODEL)]
    pub model: String,
    #[arg(long, default_value_t = 0.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 2048)]
    pub max_output_tokens: u32,
    /// Chat-completions base URL; the key comes from DSCHECKER_API_KEY.
    #[arg(long, env = API_BASE_ENV)]
    pub api_base: Option<String>,
    /// Answer from recorded model transcripts (file or directory) instead of the network.
    #[arg(long, conflicts_with = "record")]
    pub replay: Option<PathBuf>,
    /// Record every model exchange into this directory.
    #[arg(long)]
    pub record: Option<PathBuf>,
}

impl ModelArgs {
    fn params(&self) -> GenerationParams {
        GenerationParams {
            model_name: self.model.clone(),
            temperature: self.temperature,
            max_output_tokens: self.max_output_tokens,
        }
    }
}

#[derive(Debug, Args)]
pub struct ExecArgs {
    /// Interpreter that runs snippets (default python3).
    #[arg(long, env = INTERPRETER_ENV)]
    pub interpreter: Option<PathBuf>,
    /// Answer executions from recorded transcripts (repeatable).
    #[arg(long = "exec-replay", conflicts_with = "exec_record")]
    pub exec_replay: Vec<PathBuf>,
    /// Record executions into this transcript file (merged with its current contents).
    #[arg(long)]
    pub exec_record: Option<PathBuf>,
    /// Per-execution timeout in milliseconds.
    #[arg(long, default_value_t = DEFAULT_TIMEOUT_MS)]
    pub timeout: u64,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub snippet: SnippetArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub exec: ExecArgs,
    /// base, data, dir, full or fewshot.
    #[arg(long, default_value = "full", value_parser = parse_variant)]
    pub prompt: PromptVariant,
    /// Few-shot exemplar store (JSON).
    #[arg(long)]
    pub exemplars: Option<PathBuf>,
    /// Prompt template replacing the bundled one.
    #[arg(long)]
    pub template: Option<PathBuf>,
    /// Save the model's verdict JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FixArgs {
    #[command(flatten)]
    pub check: CheckArgs,
    /// Apply the patch and print (or, with --patched-out, save) the patched snippet.
    #[arg(long)]
    pub apply: bool,
    /// Run the original and patched snippets and classify the fix.
    #[arg(long)]
    pub validate: bool,
    #[arg(long)]
    pub patched_out: Option<PathBuf>,
    /// Lines a hunk may drift from its stated position.
    #[arg(long = "patch-fuzz", visible_alias = "fuzz", default_value_t = DEFAULT_FUZZ)]
    pub fuzz: usize,
}

#[derive(Debug, Args)]
pub struct AgentArgs {
    #[command(flatten)]
    pub snippet: SnippetArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub exec: ExecArgs,
    /// Tool-calling rounds before the model is told to answer.
    #[arg(long, default_value_t = DEFAULT_MAX_ITERATIONS)]
    pub max_iters: usize,
    #[arg(long)]
    pub template: Option<PathBuf>,
    /// Save the verdict JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Save the call log as JSON.
    #[arg(long)]
    pub call_log_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[arg(long)]
    pub snippet: PathBuf,
    #[arg(long)]
    pub var: String,
    #[arg(long)]
    pub line: usize,
    #[arg(long = "data-file")]
    pub data_files: Vec<PathBuf>,
    /// Print the record as JSON.
    #[arg(long)]
    pub json: bool,
    #[command(flatten)]
    pub exec: ExecArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Dataset manifest (JSON lines).
    #[arg(long)]
    pub dataset: PathBuf,
    /// Configuration file naming each detector setup.
    #[arg(long)]
    pub configs: PathBuf,
    /// Explanation adjudications, {id: bool}.
    #[arg(long)]
    pub adjudications: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report file (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Also save the human-readable table here.
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// strict counts a detection only with a valid explanation; raw ignores adjudications.
    #[arg(long, default_value = "strict")]
    pub mode: AdjudicationMode,
    #[arg(long)]
    pub docs: Option<PathBuf>,
    #[arg(long)]
    pub exemplars: Option<PathBuf>,
    #[arg(long)]
    pub template: Option<PathBuf>,
    #[arg(long, env = INTERPRETER_ENV)]
    pub interpreter: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_TIMEOUT_MS)]
    pub timeout: u64,
    #[arg(long = "patch-fuzz", visible_alias = "fuzz", default_value_t = DEFAULT_FUZZ)]
    pub fuzz: usize,
    #[arg(long, default_value_t = DEFAULT_SAMPLE_SIZE)]
    pub sample_size: usize,
    #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
    pub resamples: usize,
    #[arg(long)]
    pub without_replacement: bool,
}

fn parse_probe_target(s: &str) -> Result<ProbeTarget, String> {
    let (name, line) = s
        .rsplit_once('@')
        .ok_or_else(|| format!("expected NAME@LINE, got `{s}`"))?;
    let line: usize = line.parse().map_err(|_| format!("bad line number in `{s}`"))?;
    if name.is_empty() || line == 0 {
        return Err(format!("expected NAME@LINE with LINE >= 1, got `{s}`"));
    }
    Ok(ProbeTarget::new(name, line))
}

fn parse_variant(s: &str) -> Result<PromptVariant, String> {
    s.parse()
}

fn input_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::coded("INPUT_IO", format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|e| Error::coded("OUTPUT_IO", format!("{}: {e}", path.display())))
}

/// Picks the model provider. A replay source never touches the network.
pub fn build_gateway(
    replay: Option<&Path>,
    record: Option<&Path>,
    api_base: Option<&str>,
) -> Result<Gateway, Error> {
    if let Some(path) = replay {
        return Ok(Gateway::new(Arc::new(ReplayProvider::load(path)?)));
    }
    let key = std::env::var(API_KEY_ENV)
        .ok()
        .filter(|k| !k.is_empty())
        .ok_or_else(|| {
            dschecker_core::gateway::GatewayError::ProviderConfig(format!(
                "{API_KEY_ENV} is not set; pass --replay to answer from transcripts"
            ))
        })?;
    let base = api_base.unwrap_or(DEFAULT_API_BASE);
    let http = Arc::new(HttpProvider::new(base, key));
    Ok(match record {
        Some(dir) => Gateway::new(Arc::new(RecordingProvider::new(http, dir)?)),
        None => Gateway::new(http),
    })
}

/// The interpreter for a command, plus where to save what it recorded.
struct ExecSetup {
    interpreter: Arc<dyn Interpreter>,
    recorder: Option<(Arc<RecordingInterpreter>, PathBuf)>,
}

impl ExecSetup {
    fn new(args: &ExecArgs) -> Result<Self, Error> {
        if !args.exec_replay.is_empty() {
            let t = ExecTranscript::load_all(&args.exec_replay)?;
            return Ok(ExecSetup {
                interpreter: Arc::new(ReplayInterpreter::new(t)),
                recorder: None,
            });
        }
        let live: Arc<dyn Interpreter> = Arc::new(SubprocessInterpreter::from_env(args.interpreter.as_deref()));
        Ok(match &args.exec_record {
            Some(path) => {
                let rec = Arc::new(RecordingInterpreter::new(live));
                ExecSetup {
                    interpreter: rec.clone(),
                    recorder: Some((rec, path.clone())),
                }
            }
            None => ExecSetup {
                interpreter: live,
                recorder: None,
            },
        })
    }

    /// Saves recorded executions, merged into any existing transcript.
    fn finish(&self) -> Result<(), Error> {
        let Some((rec, path)) = &self.recorder else {
            return Ok(());
        };
        let mut merged = if path.exists() {
            ExecTranscript::load(path)?
        } else {
            ExecTranscript::default()
        };
        let fresh = rec.transcript();
        merged.entries.retain(|e| !fresh.entries.iter().any(|f| f.key == e.key));
        merged.entries.extend(fresh.entries);
        merged.entries.sort_by(|a, b| a.key.cmp(&b.key));
        Ok(merged.save(path)?)
    }
}

fn load_index(dir: &Path) -> Result<DocIndex, Error> {
    Ok(DocIndex::load(dir)?)
}

fn load_template(path: Option<&Path>) -> Result<PromptTemplate, Error> {
    Ok(match path {
        Some(p) => PromptTemplate::load(p)?,
        None => PromptTemplate::default(),
    })
}

fn load_exemplar_store(path: Option<&Path>) -> Result<Vec<FewShotExemplar>, Error> {
    Ok(match path {
        Some(p) => load_exemplars(p)?,
        None => Vec::new(),
    })
}

/// Builds the record under review from a dataset entry or an ad-hoc snippet.
fn resolve_record(args: &SnippetArgs) -> Result<SnippetRecord, Error> {
    let mut record = match (&args.dataset, &args.dataset_record, &args.snippet) {
        (Some(manifest), Some(id), _) => {
            let ds = load_dataset(manifest)?;
            ds.get(id)
                .cloned()
                .ok_or_else(|| Error::coded("UNKNOWN_RECORD", format!("`{id}` is not in {}", manifest.display())))?
        }
        (_, _, Some(path)) => {
            let source = fs::read_to_string(path).map_err(|e| input_error(path, e))?;
            let id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "snippet".into());
            let library = args.library.clone().unwrap_or_default();
            let mut r = SnippetRecord::ad_hoc(&id, &library, source);
            r.snippet_path = path.clone();
            r
        }
        _ => return Err(Error::coded("INPUT_IO", "pass --snippet or --dataset with --dataset-record")),
    };
    if let Some(lib) = &args.library {
        record.library = lib.clone();
    }
    if let Some(api) = &args.target_api {
        record.target_api = api.clone();
    }
    if !args.data_files.is_empty() {
        record.data_files = args.data_files.clone();
    }
    if !args.probes.is_empty() {
        record.probe_targets = args.probes.clone();
    }
    for f in record.resolved_data_files() {
        if !f.is_file() {
            return Err(input_error(&f, "data file not found"));
        }
    }
    if let Some(dir) = &args.docs {
        attach_directives(&mut record, &load_index(dir)?);
    }
    Ok(record)
}

fn print_verdict(out: &mut dyn Write, verdict: &Verdict) -> std::io::Result<()> {
    writeln!(out, "{}", verdict.raw.trim())?;
    writeln!(out)?;
    if verdict.flags_misuse() {
        writeln!(out, "verdict: misuse flagged")?;
        if let Some(e) = &verdict.explanation {
            writeln!(out, "explanation: {}", e.trim())?;
        }
        if let Some(p) = &verdict.patch {
            writeln!(out, "patch: {} lines", p.lines().count())?;
        }
    } else {
        writeln!(out, "verdict: no misuse found")?;
    }
    Ok(())
}

fn save_verdict(path: Option<&Path>, verdict: &Verdict) -> Result<(), Error> {
    match path {
        Some(p) => write_file(p, &format!("{}\n", verdict.raw.trim())),
        None => Ok(()),
    }
}

fn verdict_exit(verdict: &Verdict) -> i32 {
    if verdict.flags_misuse() {
        exit::FLAGGED
    } else {
        exit::OK
    }
}

fn run_check(args: &CheckArgs, out: &mut dyn Write) -> Result<(i32, Option<Verdict>, SnippetRecord, ExecSetup), Error> {
    let record = resolve_record(&args.snippet)?;
    let exemplars = load_exemplar_store(args.exemplars.as_deref())?;
    if args.prompt == PromptVariant::FewShot && exemplars.is_empty() {
        return Err(dschecker_core::prompt::PromptError::FewShotWithoutExemplars.into());
    }
    if args.prompt.includes_data() && record.probe_targets.is_empty() {
        return Err(Error::coded(
            "MISSING_PROBE_TARGETS",
            format!("the {} prompt needs probe targets; pass --probe NAME@LINE", args.prompt.as_str()),
        ));
    }
    let template = load_template(args.template.as_deref())?;
    let gateway = build_gateway(args.model.replay.as_deref(), args.model.record.as_deref(), args.model.api_base.as_deref())?;
    let exec = ExecSetup::new(&args.exec)?;
    let params = args.model.params();
    let ctx = CheckContext {
        gateway: &gateway,
        interpreter: exec.interpreter.as_ref(),
        template: &template,
        exemplars: &exemplars,
        params: &params,
        timeout_ms: args.exec.timeout,
    };
    let result = check_record(&record, args.prompt, &ctx);
    exec.finish()?;
    let verdict = result?.verdict;
    print_verdict(out, &verdict).ok();
    save_verdict(args.out.as_deref(), &verdict)?;
    Ok((verdict_exit(&verdict), Some(verdict), record, exec))
}

fn run_fix(args: &FixArgs, out: &mut dyn Write) -> Result<i32, Error> {
    let (code, verdict, record, exec) = run_check(&args.check, out)?;
    let verdict = verdict.expect("check returns a verdict");
    let Some(patch) = verdict.patch.as_deref().filter(|_| verdict.flags_misuse()) else {
        writeln!(out, "nothing to fix").ok();
        return Ok(code);
    };
    if args.apply {
        let patched = apply_patch_with_fuzz(&record.source, patch, args.fuzz).map_err(|e| {
            Error::coded("PATCH_APPLY_FAILED", e.to_string())
        })?;
        match &args.patched_out {
            Some(p) => write_file(p, &patched)?,
            None => {
                writeln!(out, "--- patched snippet ---").ok();
                write!(out, "{patched}").ok();
            }
        }
    }
    if !args.validate {
        return Ok(code);
    }
    let result = validate_fix(&record, patch, exec.interpreter.as_ref(), args.fuzz, args.check.exec.timeout);
    exec.finish()?;
    let report = result?;
    let class = serde_json::to_value(report.outcome.classification).expect("classification serializes");
    writeln!(
        out,
        "{}",
        serde_json::to_string(&report.outcome).expect("fix outcome serializes")
    )
    .ok();
    writeln!(out, "fix: {} ({})", class.as_str().unwrap_or_default(), report.outcome.evidence).ok();
    Ok(match report.outcome.classification {
        FixClassification::Fixed | FixClassification::NotAttempted => exit::OK,
        FixClassification::StillBroken => exit::STILL_BROKEN,
        FixClassification::NewError => exit::NEW_ERROR,
        FixClassification::PatchApplyFailed => exit::PATCH,
        FixClassification::Timeout => exit::TIMEOUT,
    })
}

fn run_agent_cmd(args: &AgentArgs, out: &mut dyn Write) -> Result<i32, Error> {
    let docs = args
        .snippet
        .docs
        .as_deref()
        .ok_or_else(|| Error::coded("MISSING_DOCS", "agent mode needs --docs"))?;
    let index = load_index(docs)?;
    let record = resolve_record(&args.snippet)?;
    let template = load_template(args.template.as_deref())?;
    let gateway = build_gateway(args.model.replay.as_deref(), args.model.record.as_deref(), args.model.api_base.as_deref())?;
    let exec = ExecSetup::new(&args.exec)?;
    let config = AgentConfig {
        max_iterations: args.max_iters,
        timeout_ms: args.exec.timeout,
        ..AgentConfig::default()
    };
    let result = run_agent(
        &record,
        &index,
        &gateway,
        exec.interpreter.as_ref(),
        &template,
        &args.model.params(),
        &config,
    );
    exec.finish()?;
    let run = result?;
    print_verdict(out, &run.verdict).ok();
    write!(out, "{}", run.call_log.summary()).ok();
    save_verdict(args.out.as_deref(), &run.verdict)?;
    if let Some(p) = &args.call_log_out {
        let json = serde_json::to_string_pretty(&run.call_log).expect("call log serializes");
        write_file(p, &(json + "\n"))?;
    }
    Ok(verdict_exit(&run.verdict))
}

fn run_probe(args: &ProbeArgs, out: &mut dyn Write) -> Result<i32, Error> {
    let source = fs::read_to_string(&args.snippet).map_err(|e| input_error(&args.snippet, e))?;
    let mut record = SnippetRecord::ad_hoc("probe", "", source);
    record.data_files = args.data_files.clone();
    for f in record.resolved_data_files() {
        if !f.is_file() {
            return Err(input_error(&f, "data file not found"));
        }
    }
    let target = ProbeTarget::new(&args.var, args.line);
    let exec = ExecSetup::new(&args.exec)?;
    let result = collect_data_info(exec.interpreter.as_ref(), &record, &[target.clone()], args.exec.timeout);
    exec.finish()?;
    let infos = result?;
    let info = infos.iter().find(|i| i.target == target).ok_or_else(|| {
        Error::coded(
            "SHIM_PROTOCOL",
            format!("the snippet stopped before {target} was reached"),
        )
    })?;
    if args.json {
        writeln!(out, "{}", serde_json::to_string_pretty(info).expect("data info serializes")).ok();
    } else {
        let kind = serde_json::to_value(info.kind()).expect("kind serializes");
        writeln!(out, "{target}: {}", kind.as_str().unwrap_or_default()).ok();
        writeln!(out, "{}", render_data_body(info)).ok();
    }
    Ok(exit::OK)
}

fn load_eval_dataset(args: &EvalArgs, index: Option<&DocIndex>) -> Result<Dataset, Error> {
    let mut ds = load_dataset(&args.dataset)?;
    if let Some(index) = index {
        for r in &mut ds.records {
            attach_directives(r, index);
        }
    }
    Ok(ds)
}

fn run_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<i32, Error> {
    let config = EvalConfigFile::load(&args.configs)?;
    let index = args.docs.as_deref().map(load_index).transpose()?;
    let dataset = load_eval_dataset(args, index.as_ref())?;
    let global_adj = args.adjudications.as_deref().map(load_adjudications).transpose()?;
    let live: Arc<dyn Interpreter> = Arc::new(SubprocessInterpreter::from_env(args.interpreter.as_deref()));
    let mut runners = Vec::new();
    for spec in &config.configurations {
        let gateway = build_gateway(spec.transcripts.as_deref(), spec.record.as_deref(), None)?;
        let interpreter: Arc<dyn Interpreter> = if spec.exec_transcripts.is_empty() {
            live.clone()
        } else {
            Arc::new(ReplayInterpreter::new(ExecTranscript::load_all(&spec.exec_transcripts)?))
        };
        let adjudications = match &spec.adjudications {
            Some(p) => Some(load_adjudications(p)?),
            None => global_adj.clone(),
        };
        let mut agent = spec.agent_config();
        agent.timeout_ms = args.timeout;
        runners.push(Runner {
            name: spec.name.clone(),
            method: spec.method,
            params: spec.params(),
            agent,
            gateway,
            interpreter,
            adjudications,
        });
    }
    let exemplars = load_exemplar_store(args.exemplars.as_deref())?;
    if runners.iter().any(|r| r.method == Method::Prompt(PromptVariant::FewShot)) && exemplars.is_empty() {
        return Err(dschecker_core::prompt::PromptError::FewShotWithoutExemplars.into());
    }
    let template = load_template(args.template.as_deref())?;
    let shared = EvalShared {
        template: &template,
        exemplars: &exemplars,
        index: index.as_ref(),
    };
    let options = EvalOptions {
        bootstrap: BootstrapConfig {
            sample_size: args.sample_size,
            resamples: args.resamples,
            seed: args.seed,
            with_replacement: !args.without_replacement,
        },
        mode: args.mode,
        jobs: args.jobs,
        fuzz: args.fuzz,
        timeout_ms: args.timeout,
    };
    let report = evaluate(&dataset, &runners, &shared, &options)?;
    write_file(&args.out, &report.to_json())?;
    let table = report.render_table();
    if let Some(p) = &args.table {
        write_file(p, &table)?;
    }
    write!(out, "{table}").ok();
    Ok(exit::OK)
}

/// Runs a parsed command, writing results to `out` and errors to `err`.
/// Returns the process exit code.
pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = match &cli.command {
        Command::Check(a) => run_check(a, out).map(|(code, ..)| code),
        Command::Fix(a) => run_fix(a, out),
        Command::Agent(a) => run_agent_cmd(a, out),
        Command::Probe(a) => run_probe(a, out),
        Command::Eval(a) => run_eval(a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let e = e.flatten();
            writeln!(err, "error: {e}").ok();
            exit::exit_code(e.code())
        }
    }
}
