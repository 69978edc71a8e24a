// Copyright 2026 the migratekit Authors
// SPDX-License-Identifier: Apache-2.0

//! End-to-end commands behind the `migratekit` binary: extraction,
//! summarization, migration and evaluation, with every intermediate
//! artifact written to an output directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abstractor::{self, AbstractError, AbstractorConfig, Summary};
use crate::concretizer::{
    self, lexical_privileged_set, ConcretizeFailure, ConcretizerConfig, MigrationTrace,
    PrivilegedSet, Route, DEFAULT_LEXICAL_THRESHOLD,
};
use crate::device::wire::WireDevice;
use crate::device::{Device, DriverError};
use crate::evaluator::{
    aggregate_run, alignment_check, run_test, CaseRecord, DecisionSummary, EvalError, RunReport,
    SuccessJudgement,
};
use crate::ir::{extract_logic, parse_test_case, IrError, TestCase, TestLogic};
use crate::llm::{BackendSpec, Gateway, LlmConfig, LlmError, LlmSession, TokenUsage, API_KEY_ENV};
use crate::sim::{bundled_app, load_sim_app, SimAppSpec, SimDevice, SimError};

pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1";
pub const DEFAULT_MODEL: &str = "gpt-3.5-turbo";

/// Error categories, each with its own process exit code.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Schema(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Summarization(String),
    #[error("device: {0}")]
    Driver(String),
    #[error("LLM: {0}")]
    Llm(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Schema(_) | PipelineError::Config(_) => 2,
            PipelineError::Summarization(_) => 3,
            PipelineError::Driver(_) => 4,
            PipelineError::Llm(_) => 5,
        }
    }
}

impl From<IrError> for PipelineError {
    fn from(e: IrError) -> Self {
        PipelineError::Schema(e.to_string())
    }
}

impl From<SimError> for PipelineError {
    fn from(e: SimError) -> Self {
        PipelineError::Schema(e.to_string())
    }
}

impl From<DriverError> for PipelineError {
    fn from(e: DriverError) -> Self {
        PipelineError::Driver(e.to_string())
    }
}

impl From<EvalError> for PipelineError {
    fn from(e: EvalError) -> Self {
        PipelineError::Config(e.to_string())
    }
}

impl From<LlmError> for PipelineError {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::Config(_) | LlmError::Io(_) | LlmError::InvalidPrompt(_) => {
                PipelineError::Config(e.to_string())
            }
            _ => PipelineError::Llm(e.to_string()),
        }
    }
}

impl From<AbstractError> for PipelineError {
    fn from(e: AbstractError) -> Self {
        match e {
            AbstractError::Llm(l) => l.into(),
            AbstractError::EmptyInput => PipelineError::Config(e.to_string()),
            AbstractError::SummarizationFailed { .. } => PipelineError::Summarization(e.to_string()),
        }
    }
}

impl From<ConcretizeFailure> for PipelineError {
    fn from(e: ConcretizeFailure) -> Self {
        match e {
            ConcretizeFailure::Driver(d) => d.into(),
            ConcretizeFailure::Llm(l) => l.into(),
            ConcretizeFailure::Invalid(m) => PipelineError::Config(m),
        }
    }
}

fn read(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| PipelineError::Config(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("artifact serializes") + "\n"
}

pub fn load_case(path: &Path) -> Result<TestCase, PipelineError> {
    parse_test_case(&read(path)?)
        .map_err(|e| PipelineError::Schema(format!("{}: {e}", path.display())))
}

pub fn load_logic(path: &Path) -> Result<TestLogic, PipelineError> {
    TestLogic::parse_document(&read(path)?)
        .map_err(|e| PipelineError::Schema(format!("{}: {e}", path.display())))
}

/// `sim:<bundled name or spec path>` or `wire:<host:port>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeviceSelector {
    Sim(String),
    Wire(String),
}

impl FromStr for DeviceSelector {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            Some(("sim", rest)) if !rest.is_empty() => Ok(DeviceSelector::Sim(rest.into())),
            Some(("wire", rest)) if !rest.is_empty() => Ok(DeviceSelector::Wire(rest.into())),
            _ => Err(PipelineError::Config(format!(
                "bad device selector `{s}` (expected sim:<name|path> or wire:<addr>)"
            ))),
        }
    }
}

/// Loads a bundled simulator app by name, or a spec file by path.
pub fn load_sim(name_or_path: &str) -> Result<SimAppSpec, PipelineError> {
    if bundled_app_exists(name_or_path) {
        return Ok(bundled_app(name_or_path)?);
    }
    let path = Path::new(name_or_path);
    load_sim_app(&read(path)?).map_err(|e| PipelineError::Schema(format!("{}: {e}", path.display())))
}

fn bundled_app_exists(name: &str) -> bool {
    crate::sim::bundled_app_names().any(|n| n == name)
}

/// An opened device and, for simulators, the spec used for oracles.
pub struct OpenDevice {
    pub device: Box<dyn Device>,
    pub spec: Option<Arc<SimAppSpec>>,
}

impl DeviceSelector {
    pub fn open(&self) -> Result<OpenDevice, PipelineError> {
        match self {
            DeviceSelector::Sim(name) => {
                let spec = Arc::new(load_sim(name)?);
                Ok(OpenDevice {
                    device: Box::new(SimDevice::new(spec.clone())),
                    spec: Some(spec),
                })
            }
            DeviceSelector::Wire(addr) => Ok(OpenDevice {
                device: Box::new(WireDevice::connect_tcp(addr.as_str())?),
                spec: None,
            }),
        }
    }
}

/// `http`, `scripted:<path>` or `replay:<path>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LlmSelector {
    Http,
    Scripted(PathBuf),
    Replay(PathBuf),
}

impl FromStr for LlmSelector {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "http" => Ok(LlmSelector::Http),
            Some(("scripted", p)) if !p.is_empty() => Ok(LlmSelector::Scripted(p.into())),
            Some(("replay", p)) if !p.is_empty() => Ok(LlmSelector::Replay(p.into())),
            _ => Err(PipelineError::Config(format!(
                "bad LLM selector `{s}` (expected http, scripted:<path> or replay:<path>)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmOptions {
    pub selector: LlmSelector,
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub record: Option<PathBuf>,
}

impl LlmOptions {
    pub fn new(selector: LlmSelector) -> Self {
        LlmOptions {
            selector,
            endpoint: DEFAULT_ENDPOINT.into(),
            model: DEFAULT_MODEL.into(),
            temperature: crate::llm::DEFAULT_TEMPERATURE,
            record: None,
        }
    }

    pub fn gateway(&self) -> Result<Gateway, PipelineError> {
        let backend = match &self.selector {
            LlmSelector::Http => BackendSpec::Http {
                endpoint: self.endpoint.clone(),
                model: self.model.clone(),
                api_key_env: API_KEY_ENV.into(),
            },
            LlmSelector::Scripted(p) => BackendSpec::Scripted(p.clone()),
            LlmSelector::Replay(p) => BackendSpec::Replay(p.clone()),
        };
        let mut config = LlmConfig::new(backend);
        config.temperature = self.temperature;
        let mut gw = Gateway::from_config(&config)?;
        if let Some(path) = &self.record {
            if let Some(dir) = path.parent() {
                fs::create_dir_all(dir)
                    .map_err(|e| PipelineError::Config(format!("{}: {e}", dir.display())))?;
            }
            gw = gw.record_to(path)?;
        }
        Ok(gw)
    }
}

fn file_stem(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    name.strip_suffix(".json").unwrap_or(&name).to_string()
}

/// Writes one `<stem>.logic.txt` per source case.
pub fn cmd_extract(cases: &[PathBuf], out: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let parsed = cases
        .iter()
        .map(|p| load_case(p).map(|c| (p, c)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut written = Vec::new();
    for (path, case) in parsed {
        let target = out.join(format!("{}.logic.txt", file_stem(path)));
        write(&target, &extract_logic(&case).to_document())?;
        written.push(target);
    }
    Ok(written)
}

#[derive(Debug, Clone, Serialize)]
struct SummaryRecord<'a> {
    rounds: u32,
    feedback_sent: &'a [String],
    token_usage: TokenUsage,
}

fn summarize_into(
    logics: &[TestLogic],
    functionality: &str,
    category: &str,
    config: &AbstractorConfig,
    gateway: &Gateway,
    out: &Path,
) -> Result<(Summary, TokenUsage), PipelineError> {
    config.validate().map_err(PipelineError::Config)?;
    let mut session = LlmSession::new(gateway);
    match abstractor::summarize(logics, functionality, category, config, &mut session) {
        Ok(summary) => {
            write(&out.join("general.logic.txt"), &summary.logic.to_document())?;
            write(
                &out.join("summary.json"),
                &to_json(&SummaryRecord {
                    rounds: summary.rounds,
                    feedback_sent: &summary.feedback_sent,
                    token_usage: session.usage(),
                }),
            )?;
            Ok((summary, session.usage()))
        }
        Err(e) => {
            if let AbstractError::SummarizationFailed { last_violations, .. } = &e {
                write(&out.join("violations.json"), &to_json(last_violations))?;
            }
            Err(e.into())
        }
    }
}

/// Summarizes individual logic files into `general.logic.txt`.
pub fn cmd_abstract(
    logic_files: &[PathBuf],
    functionality: Option<&str>,
    category: Option<&str>,
    config: &AbstractorConfig,
    llm: &LlmOptions,
    out: &Path,
) -> Result<TestLogic, PipelineError> {
    let logics = logic_files.iter().map(|p| load_logic(p)).collect::<Result<Vec<_>, _>>()?;
    let first = logics
        .first()
        .ok_or_else(|| PipelineError::Config("no logic files given".into()))?;
    let functionality = functionality.unwrap_or(&first.functionality).to_string();
    let category = category.unwrap_or(&first.category).to_string();
    let gateway = llm.gateway()?;
    let (summary, _) = summarize_into(&logics, &functionality, &category, config, &gateway, out)?;
    Ok(summary.logic)
}

/// Where the general logic comes from.
#[derive(Debug, Clone)]
pub enum MigrationInput {
    General(PathBuf),
    /// Source cases to extract and summarize first.
    Sources(Vec<PathBuf>),
}

#[derive(Debug, Clone)]
pub struct MigrateOptions {
    pub input: MigrationInput,
    pub device: DeviceSelector,
    pub privileged: Option<PathBuf>,
    pub abstractor: AbstractorConfig,
    pub concretizer: ConcretizerConfig,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenAccount {
    pub summarization: TokenUsage,
    pub concretization: TokenUsage,
    pub total: TokenUsage,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunInfo {
    pub target_app: String,
    pub device: DeviceSelector,
    pub max_ratio: f64,
    pub max_selection: u32,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug)]
pub struct MigrationResult {
    pub case: TestCase,
    pub trace: MigrationTrace,
    pub tokens: TokenAccount,
}

/// Runs abstraction (when given sources) and concretization, persisting
/// the logic, privileged set, migrated case, trace and token accounting.
pub fn cmd_migrate(opts: &MigrateOptions, llm: &LlmOptions) -> Result<MigrationResult, PipelineError> {
    opts.concretizer.validate().map_err(PipelineError::Config)?;
    let started = Instant::now();
    let gateway = llm.gateway()?;
    let mut open = opts.device.open()?;
    let (general, sources, summarization) = match &opts.input {
        MigrationInput::General(path) => (load_logic(path)?, Vec::new(), TokenUsage::default()),
        MigrationInput::Sources(paths) => {
            let cases = paths.iter().map(|p| load_case(p)).collect::<Result<Vec<_>, _>>()?;
            let logics: Vec<TestLogic> = cases.iter().map(extract_logic).collect();
            let first = logics
                .first()
                .ok_or_else(|| PipelineError::Config("no source cases given".into()))?;
            let (summary, usage) = summarize_into(
                &logics,
                &first.functionality.clone(),
                &first.category.clone(),
                &opts.abstractor,
                &gateway,
                &opts.out,
            )?;
            (summary.logic, cases, usage)
        }
    };
    let mut privileged = match &opts.privileged {
        Some(path) => PrivilegedSet::parse(&read(path)?)
            .map_err(|e| PipelineError::Schema(format!("{}: {e}", path.display())))?,
        None => match sources.first() {
            Some(source) => {
                lexical_privileged_set(source, open.device.as_mut(), DEFAULT_LEXICAL_THRESHOLD)?
            }
            None => {
                tracing::warn!("no privileged file and no source case; every step goes to completion");
                PrivilegedSet::empty("none")
            }
        },
    };
    write(&opts.out.join("privileged.json"), &privileged.to_document())?;
    let result = concretizer::concretize(
        &general,
        &mut privileged,
        open.device.as_mut(),
        &gateway,
        &opts.concretizer,
    );
    let (case, trace) = match result {
        Ok(ok) => ok,
        Err(e) => {
            write(&opts.out.join("trace.partial.json"), &e.trace.to_document())?;
            return Err(e.failure.into());
        }
    };
    let tokens = TokenAccount {
        summarization,
        concretization: trace.token_usage,
        total: summarization + trace.token_usage,
    };
    write(&opts.out.join("migrated.json"), &case.to_document())?;
    write(&opts.out.join("trace.json"), &trace.to_document())?;
    write(&opts.out.join("tokens.json"), &to_json(&tokens))?;
    write(
        &opts.out.join("run.json"),
        &to_json(&RunInfo {
            target_app: trace.target_app.clone(),
            device: opts.device.clone(),
            max_ratio: opts.abstractor.max_ratio,
            max_selection: opts.concretizer.max_selection,
            temperature: gateway.temperature(),
            seed: opts.seed,
        }),
    )?;
    write(
        &opts.out.join("timing.json"),
        &to_json(&serde_json::json!({ "wall_time_secs": started.elapsed().as_secs_f64() })),
    )?;
    Ok(MigrationResult { case, trace, tokens })
}

/// One entry of an evaluation suite manifest. Paths are relative to the
/// manifest's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub case_id: String,
    pub migrated: PathBuf,
    pub ground_truth: PathBuf,
    pub device: String,
    /// Defaults to the migrated case's functionality.
    #[serde(default)]
    pub functionality: Option<String>,
    /// Migration trace, for token and decision accounting.
    #[serde(default)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteManifest {
    pub cases: Vec<SuiteEntry>,
}

fn evaluate_entry(entry: &SuiteEntry, base: &Path) -> Result<CaseRecord, PipelineError> {
    let migrated = load_case(&base.join(&entry.migrated))?;
    let ground_truth = load_case(&base.join(&entry.ground_truth))?;
    let mut open = entry.device.parse::<DeviceSelector>()?.open()?;
    let execution = run_test(&migrated, open.device.as_mut())?;
    let functionality = entry.functionality.as_deref().unwrap_or(&migrated.functionality);
    let success = match &open.spec {
        Some(spec) => {
            if crate::evaluator::judge_success(&execution, spec, functionality)? {
                SuccessJudgement::Success
            } else {
                SuccessJudgement::Failure
            }
        }
        None => SuccessJudgement::Undetermined,
    };
    let (token_usage, decisions) = match &entry.trace {
        Some(p) => {
            let trace: MigrationTrace = serde_json::from_str(&read(&base.join(p))?)
                .map_err(|e| PipelineError::Schema(format!("{}: {e}", p.display())))?;
            let count = |r: Route| trace.steps.iter().filter(|s| s.route == r).count() as u32;
            (
                trace.token_usage,
                DecisionSummary {
                    matched: count(Route::Matched),
                    completion: count(Route::Completion),
                    skipped: trace.skipped_steps.len() as u32,
                },
            )
        }
        None => (TokenUsage::default(), DecisionSummary::default()),
    };
    Ok(CaseRecord {
        case_id: entry.case_id.clone(),
        aligned: alignment_check(&migrated, &ground_truth),
        migrated,
        execution,
        success,
        token_usage,
        decisions,
    })
}

/// Replays every suite entry (up to `jobs` at a time) and writes
/// `report.json` and `summary.txt`.
pub fn cmd_eval(manifest_path: &Path, jobs: usize, out: &Path) -> Result<RunReport, PipelineError> {
    let manifest: SuiteManifest = serde_json::from_str(&read(manifest_path)?)
        .map_err(|e| PipelineError::Schema(format!("{}: {e}", manifest_path.display())))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let records = pool.install(|| {
        manifest
            .cases
            .par_iter()
            .map(|entry| evaluate_entry(entry, base))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let report = aggregate_run(records)?;
    report.counts.check_invariants().map_err(PipelineError::Config)?;
    write(&out.join("report.json"), &report.to_document())?;
    write(&out.join("summary.txt"), &report.summary_table())?;
    write(
        &out.join("timing.json"),
        &to_json(&serde_json::json!({
            "mean_wall_time_secs": report.mean_wall_time.as_secs_f64()
        })),
    )?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selectors_parse() {
        assert_eq!("sim:todo_alpha".parse::<DeviceSelector>().unwrap(), DeviceSelector::Sim("todo_alpha".into()));
        assert_eq!(
            "wire:127.0.0.1:7000".parse::<DeviceSelector>().unwrap(),
            DeviceSelector::Wire("127.0.0.1:7000".into())
        );
        assert!("sim:".parse::<DeviceSelector>().is_err());
        assert!("adb:emulator-5554".parse::<DeviceSelector>().is_err());
        assert_eq!("http".parse::<LlmSelector>().unwrap(), LlmSelector::Http);
        assert_eq!(
            "replay:runs/t.jsonl".parse::<LlmSelector>().unwrap(),
            LlmSelector::Replay("runs/t.jsonl".into())
        );
        assert!("scripted:".parse::<LlmSelector>().is_err());
        assert!("http:x".parse::<LlmSelector>().is_err());
    }

    #[test]
    fn errors_map_to_exit_codes() {
        let schema: PipelineError = IrError::schema("$.steps", "bad").into();
        assert_eq!(schema.exit_code(), 2);
        let summarization: PipelineError = AbstractError::SummarizationFailed {
            rounds: 3,
            last_violations: vec![],
        }
        .into();
        assert_eq!(summarization.exit_code(), 3);
        let driver: PipelineError = DriverError::Transport("gone".into()).into();
        assert_eq!(driver.exit_code(), 4);
        let llm: PipelineError = LlmError::ReplayMismatch("digest".into()).into();
        assert_eq!(llm.exit_code(), 5);
        let config: PipelineError = LlmError::Config("temperature".into()).into();
        assert_eq!(config.exit_code(), 2);
        assert_eq!(PipelineError::from(EvalError::EmptySuite).exit_code(), 2);
    }

    #[test]
    fn stems_drop_the_json_suffix() {
        assert_eq!(file_stem(Path::new("cases/a.b.json")), "a.b");
        assert_eq!(file_stem(Path::new("logic.txt")), "logic.txt");
    }

    #[test]
    fn bundled_names_take_precedence_over_paths() {
        assert_eq!(load_sim("todo_gamma").unwrap().app_id, "todo_gamma");
        assert!(matches!(load_sim("no/such/spec.json"), Err(PipelineError::Config(_))));
    }
}
