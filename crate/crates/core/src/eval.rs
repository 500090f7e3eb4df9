//! Running detector configurations over a dataset and comparing them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{AgentConfig, Agent};
use crate::digest::json_digest;
use crate::docs::DocIndex;
use crate::domain::{Correctness, Dataset, GenerationParams, GroundTruth, SnippetRecord};
use crate::gateway::Gateway;
use crate::pipeline::{check_record, validate_fix, CheckContext, Error};
use crate::prompt::{FewShotExemplar, PromptTemplate, PromptVariant};
use crate::runtime::{FixClassification, FixOutcome, Interpreter};
use crate::stats::bootstrap::{bootstrap, BootstrapConfig, Statistic};
use crate::stats::{
    detection_metrics, dunn_test, fix_rate, score_records, shapiro_wilk, Adjudication, AdjudicationMode,
    ConfusionCounts, RecordScore, StatsError,
};

pub const REPORT_FORMAT: &str = "dschecker-eval-report";
pub const REPORT_VERSION: u32 = 1;
pub const EVAL_CONFIG: &str = "EVAL_CONFIG";
pub const INVALID_ADJUDICATION: &str = "INVALID_ADJUDICATION";
const CONVENTIONS: &str = "precision is 0 when nothing is flagged; F1 is 0 when precision and recall are both 0; \
bootstrap resamples with no misuse have recall and fix rate 0";

fn eval_error(code: &'static str, message: impl Into<String>) -> Error {
    Error::coded(code, message)
}

/// How a configuration reaches its verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Prompt(PromptVariant),
    Agent,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Prompt(v) => f.write_str(v.as_str()),
            Method::Agent => f.write_str("agent"),
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("agent") {
            Ok(Method::Agent)
        } else {
            s.parse().map(Method::Prompt)
        }
    }
}

impl TryFrom<String> for Method {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.to_string()
    }
}

/// One named configuration in an evaluation config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunnerSpec {
    pub name: String,
    pub method: Method,
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_output_tokens: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    /// Model transcripts to replay (file or directory).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcripts: Option<PathBuf>,
    /// Directory to record live model conversations into.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record: Option<PathBuf>,
    /// Execution transcripts to replay instead of running the interpreter.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exec_transcripts: Vec<PathBuf>,
    /// Overrides the global adjudication file for this configuration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjudications: Option<PathBuf>,
}

impl RunnerSpec {
    pub fn params(&self) -> GenerationParams {
        let mut p = GenerationParams::new(&self.model);
        p.temperature = self.temperature;
        if let Some(t) = self.max_output_tokens {
            p.max_output_tokens = t;
        }
        p
    }

    pub fn agent_config(&self) -> AgentConfig {
        let mut c = AgentConfig::default();
        if let Some(n) = self.max_iterations {
            c.max_iterations = n;
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfigFile {
    pub configurations: Vec<RunnerSpec>,
}

impl EvalConfigFile {
    /// Parses the file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = fs::read_to_string(path)
            .map_err(|e| eval_error(EVAL_CONFIG, format!("{}: {e}", path.display())))?;
        let mut cfg: EvalConfigFile = serde_json::from_str(&text)
            .map_err(|e| eval_error(EVAL_CONFIG, format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let mut names = BTreeSet::new();
        for spec in &mut cfg.configurations {
            if !names.insert(spec.name.clone()) {
                return Err(eval_error(EVAL_CONFIG, format!("duplicate configuration `{}`", spec.name)));
            }
            spec.transcripts.as_mut().map(fix);
            spec.record.as_mut().map(fix);
            spec.adjudications.as_mut().map(fix);
            spec.exec_transcripts.iter_mut().for_each(fix);
        }
        if cfg.configurations.is_empty() {
            return Err(eval_error(EVAL_CONFIG, "no configurations"));
        }
        Ok(cfg)
    }
}

pub fn load_adjudications(path: &Path) -> Result<Adjudication, Error> {
    let text = fs::read_to_string(path)
        .map_err(|e| eval_error(INVALID_ADJUDICATION, format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| eval_error(INVALID_ADJUDICATION, format!("{}: {e}", path.display())))
}

/// A configuration ready to run.
pub struct Runner {
    pub name: String,
    pub method: Method,
    pub params: GenerationParams,
    pub agent: AgentConfig,
    pub gateway: Gateway,
    pub interpreter: Arc<dyn Interpreter>,
    pub adjudications: Option<Adjudication>,
}

pub struct EvalOptions {
    pub bootstrap: BootstrapConfig,
    pub mode: AdjudicationMode,
    pub jobs: usize,
    pub fuzz: usize,
    pub timeout_ms: u64,
}

/// Read-only inputs shared by all configurations.
pub struct EvalShared<'a> {
    pub template: &'a PromptTemplate,
    pub exemplars: &'a [FewShotExemplar],
    pub index: Option<&'a DocIndex>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorInfo {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordOutcome {
    pub id: String,
    pub ground_truth: GroundTruth,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Correctness>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fix: Option<FixOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fix_error: Option<ErrorInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_calls: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevant_tool_calls: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation_valid: Option<bool>,
}

impl RecordOutcome {
    pub fn flagged(&self) -> bool {
        self.verdict == Some(Correctness::No)
    }

    pub fn fixed(&self) -> bool {
        self.fix
            .as_ref()
            .is_some_and(|f| f.classification == FixClassification::Fixed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetMetrics {
    pub counts: ConfusionCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub fixed: u64,
    pub fix_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigurationReport {
    pub name: String,
    pub method: Method,
    pub model: String,
    pub temperature: f64,
    pub all: SubsetMetrics,
    /// Records whose target API has at least one directive.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub with_directive: Option<SubsetMetrics>,
    pub failed_records: usize,
    pub outcomes: Vec<RecordOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapVectors {
    pub configuration: String,
    pub f1: Vec<f64>,
    pub fix_rate: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityRow {
    pub configuration: String,
    pub statistic: Statistic,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub statistic: Statistic,
    pub a: String,
    pub b: String,
    pub z: f64,
    pub p_raw: f64,
    pub p_adjusted: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statistics {
    pub seed: u64,
    pub sample_size: usize,
    pub resamples: usize,
    pub with_replacement: bool,
    pub bootstrap: Vec<BootstrapVectors>,
    pub normality: Vec<NormalityRow>,
    /// Dunn's test with Bonferroni adjustment over the bootstrap vectors;
    /// empty with fewer than two configurations.
    pub comparisons: Vec<ComparisonRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub records: usize,
    pub misuses: usize,
    pub with_directive_records: usize,
    pub with_directive_misuses: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format: String,
    pub version: u32,
    pub config_digest: String,
    pub adjudication_mode: AdjudicationMode,
    pub conventions: String,
    pub dataset: DatasetSummary,
    pub configurations: Vec<ConfigurationReport>,
    pub statistics: Statistics,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// One row per metric per configuration.
    pub fn render_table(&self) -> String {
        let pct = |v: f64| format!("{:.2}%", v * 100.0);
        let width = self
            .configurations
            .iter()
            .map(|c| c.name.len())
            .max()
            .unwrap_or(0)
            .max("configuration".len());
        let mut out = format!(
            "{:<width$}  {:<9}  {:>8}  {:>14}\n",
            "configuration", "metric", "all", "with directive"
        );
        for c in &self.configurations {
            let rows: [(&str, fn(&SubsetMetrics) -> f64); 4] = [
                ("precision", |m| m.precision),
                ("recall", |m| m.recall),
                ("f1", |m| m.f1),
                ("fix rate", |m| m.fix_rate),
            ];
            for (label, get) in rows {
                let sub = c.with_directive.as_ref().map_or("-".to_string(), |m| pct(get(m)));
                out.push_str(&format!(
                    "{:<width$}  {:<9}  {:>8}  {:>14}\n",
                    c.name,
                    label,
                    pct(get(&c.all)),
                    sub
                ));
            }
        }
        out
    }
}

fn error_info(e: Error) -> ErrorInfo {
    let e = e.flatten();
    ErrorInfo {
        code: e.code().to_string(),
        message: e.to_string(),
    }
}

fn evaluate_record(
    runner: &Runner,
    shared: &EvalShared<'_>,
    options: &EvalOptions,
    record: &SnippetRecord,
) -> RecordOutcome {
    let mut outcome = RecordOutcome {
        id: record.id.clone(),
        ground_truth: record.ground_truth,
        verdict: None,
        explanation: None,
        error: None,
        fix: None,
        fix_error: None,
        tool_calls: None,
        relevant_tool_calls: None,
        explanation_valid: None,
    };
    let verdict = match runner.method {
        Method::Prompt(variant) => {
            let ctx = CheckContext {
                gateway: &runner.gateway,
                interpreter: runner.interpreter.as_ref(),
                template: shared.template,
                exemplars: shared.exemplars,
                params: &runner.params,
                timeout_ms: options.timeout_ms,
            };
            check_record(record, variant, &ctx).map(|r| r.verdict)
        }
        Method::Agent => {
            let empty = DocIndex::default();
            let agent = Agent::new(
                shared.index.unwrap_or(&empty),
                &runner.gateway,
                runner.interpreter.as_ref(),
                shared.template,
            );
            agent.run(record, &runner.params, &runner.agent).map_err(Error::from).map(|run| {
                outcome.tool_calls = Some(run.call_log.len());
                outcome.relevant_tool_calls = Some(run.call_log.relevant_count());
                run.verdict
            })
        }
    };
    let verdict = match verdict {
        Ok(v) => v,
        Err(e) => {
            outcome.error = Some(error_info(e));
            return outcome;
        }
    };
    outcome.verdict = Some(verdict.correct);
    outcome.explanation = verdict.explanation.clone();
    if let (Correctness::No, true, Some(patch)) = (verdict.correct, record.is_misuse(), &verdict.patch) {
        match validate_fix(record, patch, runner.interpreter.as_ref(), options.fuzz, options.timeout_ms) {
            Ok(report) => outcome.fix = Some(report.outcome),
            Err(e) => outcome.fix_error = Some(error_info(e)),
        }
    }
    outcome
}

fn subset_metrics(scores: &[RecordScore]) -> Result<Option<SubsetMetrics>, StatsError> {
    let counts = ConfusionCounts::from_scores(scores);
    if counts.total_misuses == 0 {
        return Ok(None);
    }
    let m = detection_metrics(&counts)?;
    let fixed = scores.iter().filter(|s| s.fixed).count() as u64;
    Ok(Some(SubsetMetrics {
        counts,
        precision: m.precision,
        recall: m.recall,
        f1: m.f1,
        fixed,
        fix_rate: fix_rate(fixed, counts.total_misuses)?,
    }))
}

fn check_adjudication_keys(dataset: &Dataset, adj: &Adjudication) -> Result<(), Error> {
    let unknown: Vec<&str> = adj
        .keys()
        .filter(|k| dataset.get(k).is_none())
        .map(String::as_str)
        .collect();
    if unknown.is_empty() {
        Ok(())
    } else {
        Err(eval_error(
            INVALID_ADJUDICATION,
            format!("ids not in the dataset: {}", unknown.join(", ")),
        ))
    }
}

#[derive(Serialize)]
struct DigestMaterial<'a> {
    configurations: Vec<(&'a str, String, &'a GenerationParams, Option<usize>)>,
    mode: AdjudicationMode,
    fuzz: usize,
}

/// Runs every configuration over the dataset and assembles the report.
///
/// Record-level failures become outcomes that count as not flagged. Only
/// configuration problems, missing adjudications and an empty dataset abort.
pub fn evaluate(
    dataset: &Dataset,
    runners: &[Runner],
    shared: &EvalShared<'_>,
    options: &EvalOptions,
) -> Result<EvalReport, Error> {
    if dataset.is_empty() || dataset.misuse_count() == 0 {
        return Err(StatsError::EmptyDataset.into());
    }
    if runners.is_empty() {
        return Err(eval_error(EVAL_CONFIG, "no configurations"));
    }
    if runners.iter().any(|r| r.method == Method::Agent) && shared.index.is_none() {
        return Err(eval_error(EVAL_CONFIG, "agent configurations need a documentation index"));
    }
    for r in runners {
        if let Some(adj) = &r.adjudications {
            check_adjudication_keys(dataset, adj)?;
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs.max(1))
        .build()
        .map_err(|e| eval_error(EVAL_CONFIG, format!("thread pool: {e}")))?;

    let with_directive: Vec<bool> = dataset.records.iter().map(|r| !r.directives.is_empty()).collect();
    let mut configurations = Vec::new();
    let mut all_scores = Vec::new();
    for runner in runners {
        let mut outcomes: Vec<RecordOutcome> = pool.install(|| {
            dataset
                .records
                .par_iter()
                .map(|rec| evaluate_record(runner, shared, options, rec))
                .collect()
        });
        let flagged: BTreeSet<String> = outcomes.iter().filter(|o| o.flagged()).map(|o| o.id.clone()).collect();
        let fixed: BTreeSet<String> = outcomes.iter().filter(|o| o.fixed()).map(|o| o.id.clone()).collect();
        let scores = score_records(dataset, &flagged, &fixed, runner.adjudications.as_ref(), options.mode)
            .map_err(|e| match e {
                StatsError::MissingAdjudication(ids) => {
                    eval_error("MISSING_ADJUDICATION", format!("configuration `{}`: {}", runner.name, ids.join(", ")))
                }
                other => other.into(),
            })?;
        for o in &mut outcomes {
            if o.flagged() && o.ground_truth == GroundTruth::Misuse {
                o.explanation_valid = runner.adjudications.as_ref().and_then(|a| a.get(&o.id).copied());
            }
        }
        let subset: Vec<RecordScore> = scores
            .iter()
            .zip(&with_directive)
            .filter(|(_, d)| **d)
            .map(|(s, _)| *s)
            .collect();
        configurations.push(ConfigurationReport {
            name: runner.name.clone(),
            method: runner.method,
            model: runner.params.model_name.clone(),
            temperature: runner.params.temperature,
            all: subset_metrics(&scores)?.ok_or(StatsError::EmptyDataset)?,
            with_directive: subset_metrics(&subset)?,
            failed_records: outcomes.iter().filter(|o| o.error.is_some()).count(),
            outcomes,
        });
        all_scores.push(scores);
    }

    let statistics = statistics(runners, &all_scores, &options.bootstrap)?;
    let digest = json_digest(&DigestMaterial {
        configurations: runners
            .iter()
            .map(|r| {
                let iters = (r.method == Method::Agent).then_some(r.agent.max_iterations);
                (r.name.as_str(), r.method.to_string(), &r.params, iters)
            })
            .collect(),
        mode: options.mode,
        fuzz: options.fuzz,
    });
    Ok(EvalReport {
        format: REPORT_FORMAT.into(),
        version: REPORT_VERSION,
        config_digest: digest,
        adjudication_mode: options.mode,
        conventions: CONVENTIONS.into(),
        dataset: DatasetSummary {
            records: dataset.len(),
            misuses: dataset.misuse_count(),
            with_directive_records: with_directive.iter().filter(|d| **d).count(),
            with_directive_misuses: dataset
                .records
                .iter()
                .filter(|r| r.is_misuse() && !r.directives.is_empty())
                .count(),
        },
        configurations,
        statistics,
    })
}

fn statistics(
    runners: &[Runner],
    scores: &[Vec<RecordScore>],
    config: &BootstrapConfig,
) -> Result<Statistics, StatsError> {
    let mut vectors = Vec::new();
    let mut normality = Vec::new();
    let mut per_stat: BTreeMap<&'static str, (Statistic, Vec<Vec<f64>>)> = BTreeMap::new();
    for (runner, s) in runners.iter().zip(scores) {
        let f1 = bootstrap(s, config, Statistic::F1)?;
        let fix = bootstrap(s, config, Statistic::FixRate)?;
        for (stat, v) in [(Statistic::F1, &f1), (Statistic::FixRate, &fix)] {
            let row = match shapiro_wilk(v) {
                Ok(r) => NormalityRow {
                    configuration: runner.name.clone(),
                    statistic: stat,
                    w: Some(r.w),
                    p: Some(r.p),
                    error: None,
                },
                Err(e) => NormalityRow {
                    configuration: runner.name.clone(),
                    statistic: stat,
                    w: None,
                    p: None,
                    error: Some(e.code().to_string()),
                },
            };
            normality.push(row);
            per_stat
                .entry(stat.as_str())
                .or_insert_with(|| (stat, Vec::new()))
                .1
                .push(v.clone());
        }
        vectors.push(BootstrapVectors {
            configuration: runner.name.clone(),
            f1,
            fix_rate: fix,
        });
    }
    let mut comparisons = Vec::new();
    if runners.len() >= 2 {
        for stat in [Statistic::F1, Statistic::FixRate] {
            let groups = &per_stat[stat.as_str()].1;
            for pair in dunn_test(groups)? {
                comparisons.push(ComparisonRow {
                    statistic: stat,
                    a: runners[pair.i].name.clone(),
                    b: runners[pair.j].name.clone(),
                    z: pair.z,
                    p_raw: pair.p_raw,
                    p_adjusted: pair.p_adjusted,
                    significant: pair.significant,
                });
            }
        }
    }
    Ok(Statistics {
        seed: config.seed,
        sample_size: config.sample_size,
        resamples: config.resamples,
        with_replacement: config.with_replacement,
        bootstrap: vectors,
        normality,
        comparisons,
    })
}
