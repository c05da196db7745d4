//! `urobot`: ingest a guideline corpus, ask questions, run the MCQ
//! benchmark, or serve the HTTP API.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;
use urobot_cli::commands::{self, AskOptions, BenchArgs};
use urobot_cli::config::{AppConfig, CommonArgs, KappaCategories, ModeArg};
use urobot_cli::{server, CliError};
use urobot_core::bench::{TestMethod, TiePolicy};

#[derive(Parser)]
#[command(
    name = "urobot",
    version,
    about = "Guideline-grounded QA workbench and MCQ benchmark"
)]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Chunk, embed and store a corpus described by a manifest.
    Ingest {
        /// Corpus manifest (JSON).
        #[arg(long, env = "UROBOT_MANIFEST")]
        manifest: PathBuf,
    },
    /// Answer one question and list its sources.
    Ask {
        query: String,
        /// Chunks retrieved per question (file key `rag.k`).
        #[arg(long, env = "UROBOT_K")]
        k: Option<usize>,
        /// Sampling temperature (file key `rag.temperature`).
        #[arg(long, env = "UROBOT_TEMPERATURE")]
        temperature: Option<f64>,
        /// Prompt mode (file key `rag.prompt_mode`).
        #[arg(long, value_enum, env = "UROBOT_PROMPT_MODE")]
        mode: Option<ModeArg>,
        /// Append a JSON line describing the exchange to this file.
        #[arg(long)]
        audit: Option<PathBuf>,
    },
    /// Run the repeated multiple-choice benchmark and write reports.
    Bench(BenchCmd),
    /// Serve the HTTP API.
    Serve {
        /// Bind address (file key `server.bind_address`).
        #[arg(long, env = "UROBOT_BIND_ADDRESS")]
        bind: Option<String>,
        /// Port (file key `server.port`).
        #[arg(long, env = "UROBOT_PORT")]
        port: Option<u16>,
        /// Comma-separated browser origins (file key `server.cors_origins`).
        #[arg(long, env = "UROBOT_CORS_ORIGINS", value_delimiter = ',')]
        cors_origins: Option<Vec<String>>,
        /// Concurrent requests (file key `server.max_in_flight`).
        #[arg(long, env = "UROBOT_MAX_IN_FLIGHT")]
        max_in_flight: Option<usize>,
    },
}

#[derive(Args)]
struct BenchCmd {
    /// Questions file (JSON lines).
    #[arg(long)]
    questions: PathBuf,
    /// Models file (TOML, `[[models]]` entries).
    #[arg(long)]
    models: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Runs per model (file key `bench.runs`).
    #[arg(long, env = "UROBOT_RUNS")]
    runs: Option<usize>,
    /// Family-wise significance level (file key `bench.alpha`).
    #[arg(long, env = "UROBOT_ALPHA")]
    alpha: Option<f64>,
    /// Bonferroni divisor (file key `bench.m`).
    #[arg(long, env = "UROBOT_BONFERRONI_M")]
    m: Option<usize>,
    /// CI confidence level (file key `bench.confidence`).
    #[arg(long, env = "UROBOT_CONFIDENCE")]
    confidence: Option<f64>,
    /// Reference model label (file key `bench.reference`).
    #[arg(long, env = "UROBOT_REFERENCE")]
    reference: Option<String>,
    /// Significance test (file key `bench.method`).
    #[arg(long, value_enum, env = "UROBOT_TEST_METHOD")]
    method: Option<MethodArg>,
    /// Majority-vote tie handling (file key `bench.ties`).
    #[arg(long, value_enum, env = "UROBOT_TIES")]
    ties: Option<TiesArg>,
    /// Fleiss' kappa categories (file key `bench.kappa`).
    #[arg(long, value_enum, env = "UROBOT_KAPPA")]
    kappa: Option<KappaCategories>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum MethodArg {
    Paired,
    Unpaired,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum TiesArg {
    Incorrect,
    Correct,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = AppConfig::load(&cli.common)?;
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Ingest { manifest } => {
            commands::ingest(&cfg, &manifest, &mut stdout)?;
        }
        Command::Ask {
            query,
            k,
            temperature,
            mode,
            audit,
        } => {
            let opts = AskOptions {
                k,
                temperature,
                mode: mode.map(Into::into),
                audit,
            };
            commands::ask(&cfg, &query, &opts, &mut stdout)?;
        }
        Command::Bench(b) => {
            let d = &mut cfg.bench;
            d.runs = b.runs.unwrap_or(d.runs);
            d.alpha = b.alpha.unwrap_or(d.alpha);
            d.m = b.m.or(d.m);
            d.confidence = b.confidence.unwrap_or(d.confidence);
            d.reference = b.reference.or(d.reference.take());
            if let Some(m) = b.method {
                d.method = match m {
                    MethodArg::Paired => TestMethod::PairedQuestions,
                    MethodArg::Unpaired => TestMethod::UnpairedRuns,
                };
            }
            if let Some(t) = b.ties {
                d.ties = match t {
                    TiesArg::Incorrect => TiePolicy::Incorrect,
                    TiesArg::Correct => TiePolicy::Correct,
                };
            }
            d.kappa = b.kappa.unwrap_or(d.kappa);
            cfg.validate()?;
            let args = BenchArgs {
                questions: b.questions,
                models: b.models,
                out_dir: b.out,
            };
            commands::bench(&cfg, &args, &mut stdout)?;
        }
        Command::Serve {
            bind,
            port,
            cors_origins,
            max_in_flight,
        } => {
            let s = &mut cfg.server;
            s.bind_address = bind.unwrap_or(std::mem::take(&mut s.bind_address));
            s.port = port.unwrap_or(s.port);
            s.cors_origins = cors_origins.unwrap_or(std::mem::take(&mut s.cors_origins));
            s.max_in_flight = max_in_flight.unwrap_or(s.max_in_flight);
            cfg.validate()?;
            let runtime = tokio::runtime::Runtime::new()
                .map_err(|e| CliError::Config(format!("cannot start runtime: {e}")))?;
            runtime.block_on(server::serve(&cfg))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    // clap exits with 2 on usage errors; 2 is reserved for data errors here.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
