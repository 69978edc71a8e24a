// Copyright 2026 the migratekit Authors
// SPDX-License-Identifier: Apache-2.0

use std::io::{BufReader, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use migratekit::abstractor::AbstractorConfig;
use migratekit::concretizer::ConcretizerConfig;
use migratekit::device::{wire, CoverageSet};
use migratekit::evaluator::coverage_capability;
use migratekit::llm::DEFAULT_TEMPERATURE;
use migratekit::pipeline::{
    self, DeviceSelector, LlmOptions, LlmSelector, MigrateOptions, MigrationInput, PipelineError,
    DEFAULT_ENDPOINT, DEFAULT_MODEL,
};
use migratekit::sim::SimDevice;

#[derive(Parser)]
#[command(name = "migratekit", version, about = "Migrate GUI test cases between apps of the same category")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct LlmArgs {
    /// http, scripted:<path> or replay:<path>
    #[arg(long, default_value = "http")]
    llm: String,
    #[arg(long, default_value = DEFAULT_ENDPOINT)]
    endpoint: String,
    #[arg(long, default_value = DEFAULT_MODEL)]
    model: String,
    #[arg(long, default_value_t = DEFAULT_TEMPERATURE)]
    temperature: f64,
    /// Write a transcript of every LLM exchange to this file.
    #[arg(long)]
    record: Option<PathBuf>,
}

impl LlmArgs {
    fn options(&self) -> Result<LlmOptions, PipelineError> {
        let mut o = LlmOptions::new(self.llm.parse::<LlmSelector>()?);
        o.endpoint = self.endpoint.clone();
        o.model = self.model.clone();
        o.temperature = self.temperature;
        o.record = self.record.clone();
        Ok(o)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Extract the individual test logic of each source test case.
    Extract {
        #[arg(required = true)]
        cases: Vec<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Summarize individual test logics into a general test logic.
    Abstract {
        #[arg(required = true)]
        logics: Vec<PathBuf>,
        #[arg(long)]
        functionality: Option<String>,
        #[arg(long)]
        category: Option<String>,
        #[arg(long, default_value_t = 1.5)]
        max_ratio: f64,
        #[command(flatten)]
        llm: LlmArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Generate a test case for the target device.
    Migrate {
        /// General test logic file.
        #[arg(long, conflicts_with = "source")]
        general: Option<PathBuf>,
        /// Source test cases to abstract first.
        #[arg(long, num_args = 1..)]
        source: Vec<PathBuf>,
        /// sim:<name|path> or wire:<host:port>
        #[arg(long)]
        device: String,
        #[arg(long)]
        privileged: Option<PathBuf>,
        #[arg(long, default_value_t = 1.5)]
        max_ratio: f64,
        #[arg(long, default_value_t = 3)]
        max_selection: u32,
        /// Recorded with the run; the pipeline itself is deterministic.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        llm: LlmArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Replay migrated cases and report executable, perfect and success rates.
    Eval {
        /// Suite manifest listing migrated case, ground truth and device.
        #[arg(long)]
        suite: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Coverage capability of generated tests against ground-truth tests.
    Coverage {
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
    },
    /// Serve a simulated app over the device wire protocol.
    ServeSim {
        /// Bundled app name or spec path.
        app: String,
        /// host:port to listen on; standard streams when omitted.
        #[arg(long)]
        listen: Option<String>,
    },
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Extract { cases, out } => {
            for p in pipeline::cmd_extract(&cases, &out)? {
                println!("{}", p.display());
            }
        }
        Command::Abstract { logics, functionality, category, max_ratio, llm, out } => {
            let config = AbstractorConfig { max_ratio, ..AbstractorConfig::default() };
            let logic = pipeline::cmd_abstract(
                &logics,
                functionality.as_deref(),
                category.as_deref(),
                &config,
                &llm.options()?,
                &out,
            )?;
            print!("{}", logic.render_steps());
            println!();
        }
        Command::Migrate {
            general,
            source,
            device,
            privileged,
            max_ratio,
            max_selection,
            seed,
            llm,
            out,
        } => {
            let input = match general {
                Some(g) => MigrationInput::General(g),
                None if !source.is_empty() => MigrationInput::Sources(source),
                None => {
                    return Err(PipelineError::Config("give --general or --source".into()));
                }
            };
            let opts = MigrateOptions {
                input,
                device: device.parse::<DeviceSelector>()?,
                privileged,
                abstractor: AbstractorConfig { max_ratio, ..AbstractorConfig::default() },
                concretizer: ConcretizerConfig { max_selection, ..ConcretizerConfig::default() },
                seed,
                out,
            };
            let result = pipeline::cmd_migrate(&opts, &llm.options()?)?;
            for step in &result.case.steps {
                println!("{}", step.render());
            }
            if !result.trace.skipped_steps.is_empty() {
                eprintln!("skipped steps: {:?}", result.trace.skipped_steps);
            }
            eprintln!("tokens: {}", result.tokens.total.total());
        }
        Command::Eval { suite, jobs, out } => {
            let report = pipeline::cmd_eval(&suite, jobs, &out)?;
            print!("{}", report.summary_table());
        }
        Command::Coverage { generated, ground_truth } => {
            let load = |p: &PathBuf| {
                std::fs::read_to_string(p)
                    .map(|t| CoverageSet::parse(&t))
                    .map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))
            };
            let ratio = coverage_capability(&load(&generated)?, &load(&ground_truth)?)?;
            println!("{ratio:.4}");
        }
        Command::ServeSim { app, listen } => {
            let spec = Arc::new(pipeline::load_sim(&app)?);
            let io_err = |e: std::io::Error| PipelineError::Driver(e.to_string());
            match listen {
                None => {
                    let mut dev = SimDevice::new(spec);
                    let stdin = std::io::stdin();
                    wire::serve(&mut dev, stdin.lock(), std::io::stdout().lock()).map_err(io_err)?;
                }
                Some(addr) => {
                    let listener = TcpListener::bind(&addr).map_err(io_err)?;
                    eprintln!("listening on {}", listener.local_addr().map_err(io_err)?);
                    std::io::stderr().flush().ok();
                    for stream in listener.incoming() {
                        let stream = stream.map_err(io_err)?;
                        let mut dev = SimDevice::new(spec.clone());
                        let reader = BufReader::new(stream.try_clone().map_err(io_err)?);
                        if let Err(e) = wire::serve(&mut dev, reader, stream) {
                            tracing::warn!("connection ended: {e}");
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("MIGRATEKIT_LOG")
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
