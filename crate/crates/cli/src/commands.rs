//! The `ingest`, `ask` and `bench` subcommands. Each writes its human
//! readable output to the supplied writer so it can be tested directly.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use tracing::warn;
use urobot_core::bench::{
    fleiss_kappa, fleiss_kappa_letters, pairwise_comparisons, render_report, run_model,
    summarize_with, AgreementReport, BenchError, BenchmarkMatrix, BenchmarkOptions, ReportFormat,
};
use urobot_core::ingest::{ingest_to_dir, IngestSummary};
use urobot_core::mcq::load_questions;
use urobot_core::rag::{ChatAnswer, PromptMode, RagEngine};
use urobot_core::store::VectorStore;
use urobot_core::Execution;

use crate::config::{AppConfig, KappaCategories, ModelsFile};
use crate::CliError;

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn load_store(path: &Path) -> Result<Arc<VectorStore>, CliError> {
    if !path.join("manifest.json").is_file() {
        return Err(CliError::Config(format!(
            "no vector store at {} (run `urobot ingest` first)",
            path.display()
        )));
    }
    Ok(Arc::new(VectorStore::load(path)?))
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

/// Loads, chunks and embeds the corpus, then upserts into the configured
/// store and saves it.
pub fn ingest(
    cfg: &AppConfig,
    manifest: &Path,
    out: &mut dyn Write,
) -> Result<IngestSummary, CliError> {
    let embedder = cfg.rag.embedder.build()?;
    let summary = ingest_to_dir(
        manifest,
        &cfg.store_path,
        embedder.as_ref(),
        Execution::Parallel,
    )?;
    writeln!(out, "{summary}").map_err(|e| io_err(Path::new("stdout"), e))?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// ask
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default)]
pub struct AskOptions {
    pub k: Option<usize>,
    pub temperature: Option<f64>,
    pub mode: Option<PromptMode>,
    /// Appends one JSON line describing the exchange.
    pub audit: Option<PathBuf>,
}

#[derive(Serialize)]
struct AskAudit<'a> {
    query: &'a str,
    model_id: &'a str,
    prompt_mode: PromptMode,
    k: usize,
    retrieved_ids: Vec<u64>,
    cited_ids: Vec<u64>,
    citations_fallback: bool,
    answer: &'a str,
}

/// Answers `query` and prints the answer followed by a "Sources" section in
/// rag mode. Baseline mode never opens the store.
pub fn ask(
    cfg: &AppConfig,
    query: &str,
    opts: &AskOptions,
    out: &mut dyn Write,
) -> Result<ChatAnswer, CliError> {
    let mut rag = cfg.rag.clone();
    if let Some(k) = opts.k {
        rag.k = k;
    }
    if let Some(t) = opts.temperature {
        rag.temperature = t;
    }
    if let Some(m) = opts.mode {
        rag.prompt_mode = m;
    }
    let store = match rag.prompt_mode {
        PromptMode::Rag => Some(load_store(&cfg.store_path)?),
        PromptMode::Baseline => None,
    };
    let engine = RagEngine::from_config(&rag, store)?;
    let answer = engine.answer_chat(query)?;

    let w = |e| io_err(Path::new("stdout"), e);
    writeln!(out, "{}", answer.answer_text.trim_end()).map_err(w)?;
    if rag.prompt_mode == PromptMode::Rag {
        writeln!(out).map_err(w)?;
        writeln!(out, "Sources").map_err(w)?;
        if answer.citations_fallback {
            writeln!(
                out,
                "(no explicit citation in the answer; showing the top retrieved chunks)"
            )
            .map_err(w)?;
        }
        for c in &answer.citations {
            writeln!(
                out,
                "[Document ID {}] {}, page {}",
                c.chunk_id, c.doc_key, c.page
            )
            .map_err(w)?;
            writeln!(out, "    {}", c.snippet).map_err(w)?;
        }
    }

    if let Some(path) = &opts.audit {
        let record = AskAudit {
            query,
            model_id: &rag.model_id,
            prompt_mode: rag.prompt_mode,
            k: rag.k,
            retrieved_ids: answer.retrieved.iter().map(|h| h.chunk_id).collect(),
            cited_ids: answer.citations.iter().map(|c| c.chunk_id).collect(),
            citations_fallback: answer.citations_fallback,
            answer: &answer.answer_text,
        };
        let mut line = serde_json::to_string(&record).map_err(|e| CliError::Data(e.to_string()))?;
        line.push('\n');
        fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .and_then(|mut f| f.write_all(line.as_bytes()))
            .map_err(|e| io_err(path, e))?;
    }
    Ok(answer)
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct BenchArgs {
    pub questions: PathBuf,
    pub models: PathBuf,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOutcome {
    pub matrices: Vec<PathBuf>,
    pub reports: Vec<PathBuf>,
    pub audit: PathBuf,
    /// Models stopped early by a fatal provider error.
    pub incomplete: Vec<String>,
}

/// File-name-safe version of a model label.
fn file_stem(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Runs every model for `cfg.bench.runs` runs and writes per-model matrix
/// CSVs, `report.{md,csv,json}` and `audit.jsonl` into `out_dir`.
///
/// A model that hits a fatal provider error keeps its finished runs in its
/// matrix CSV but is left out of the report; the command then fails with a
/// provider error after everything else has been written.
pub fn bench(
    cfg: &AppConfig,
    args: &BenchArgs,
    out: &mut dyn Write,
) -> Result<BenchOutcome, CliError> {
    let questions = load_questions(&args.questions).map_err(|e| CliError::Data(e.to_string()))?;
    let models = ModelsFile::load(&args.models)?.models;
    let mut labels = std::collections::HashSet::new();
    if let Some(dup) = models.iter().find(|m| !labels.insert(m.label.as_str())) {
        return Err(CliError::Config(format!(
            "duplicate model label {:?}",
            dup.label
        )));
    }
    let store = if models.iter().any(|m| m.rag.prompt_mode == PromptMode::Rag) {
        Some(load_store(&cfg.store_path)?)
    } else {
        None
    };
    let engines = models
        .iter()
        .map(|m| RagEngine::from_config(&m.rag, store.clone()))
        .collect::<Result<Vec<_>, _>>()?;

    fs::create_dir_all(&args.out_dir).map_err(|e| io_err(&args.out_dir, e))?;
    let audit_path = args.out_dir.join("audit.jsonl");
    let mut audit =
        std::io::BufWriter::new(fs::File::create(&audit_path).map_err(|e| io_err(&audit_path, e))?);
    let opts = BenchmarkOptions {
        runs: cfg.bench.runs,
        execution: Execution::Parallel,
    };

    let w = |e| io_err(Path::new("stdout"), e);
    let mut matrices = Vec::new();
    let mut matrix_paths = Vec::new();
    let mut incomplete = Vec::new();
    for (m, engine) in models.iter().zip(&engines) {
        let matrix = run_model(&m.label, engine, &questions, opts, Some(&mut audit))?;
        let path = args
            .out_dir
            .join(format!("matrix_{}.csv", file_stem(&m.label)));
        fs::write(&path, matrix.to_csv()).map_err(|e| io_err(&path, e))?;
        writeln!(
            out,
            "{}: {} questions x {} runs -> {}",
            m.label,
            matrix.questions(),
            matrix.runs,
            path.display()
        )
        .map_err(w)?;
        if !matrix.complete {
            warn!(model = %m.label, runs = matrix.runs, "model stopped early");
            incomplete.push(m.label.clone());
        }
        matrix_paths.push(path);
        matrices.push(matrix);
    }
    audit.flush().map_err(|e| io_err(&audit_path, e))?;

    let complete: Vec<BenchmarkMatrix> = matrices.into_iter().filter(|m| m.complete).collect();
    let reports = if complete.is_empty() {
        Vec::new()
    } else {
        write_reports(cfg, &complete, &incomplete, &args.out_dir)?
    };
    for p in &reports {
        writeln!(out, "report -> {}", p.display()).map_err(w)?;
    }
    if !incomplete.is_empty() {
        return Err(CliError::Provider(format!(
            "benchmark incomplete for {}; partial matrices kept in {}",
            incomplete.join(", "),
            args.out_dir.display()
        )));
    }
    Ok(BenchOutcome {
        matrices: matrix_paths,
        reports,
        audit: audit_path,
        incomplete,
    })
}

fn write_reports(
    cfg: &AppConfig,
    matrices: &[BenchmarkMatrix],
    incomplete: &[String],
    out_dir: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    let b = &cfg.bench;
    let summaries = matrices
        .iter()
        .map(|m| summarize_with(m, b.confidence, b.ties))
        .collect::<Result<Vec<_>, _>>()?;

    let mut notes = Vec::new();
    let runs = matrices[0].runs;
    let agreements: Vec<AgreementReport> = if runs < 2 {
        notes.push(format!(
            "Only {runs} run: confidence intervals and Fleiss' kappa need at least 2 runs and are omitted."
        ));
        Vec::new()
    } else {
        matrices
            .iter()
            .map(|m| match b.kappa {
                KappaCategories::Binary => fleiss_kappa(m),
                KappaCategories::Letters => fleiss_kappa_letters(m),
            })
            .collect::<Result<Vec<_>, _>>()?
    };

    let tests = if matrices.len() < 2 {
        Vec::new()
    } else {
        let reference = b
            .reference
            .clone()
            .unwrap_or_else(|| matrices[0].model_label.clone());
        match pairwise_comparisons(matrices, &reference, b.alpha, b.m, b.method) {
            Ok(t) => t,
            Err(BenchError::UnknownReference(r)) if incomplete.contains(&r) => {
                notes.push(format!(
                    "Reference model {r} did not finish; no significance tests."
                ));
                Vec::new()
            }
            Err(e) => return Err(e.into()),
        }
    };
    if let Some(t) = tests.first() {
        notes.push(format!(
            "Two-sided {} t-tests against {}, Bonferroni alpha = {} / {} = {}.",
            match t.method {
                urobot_core::bench::TestMethod::PairedQuestions => "paired (per-question)",
                urobot_core::bench::TestMethod::UnpairedRuns => "unpaired (per-run)",
            },
            t.model_b,
            t.alpha,
            t.m,
            t.adjusted_alpha
        ));
    }
    for label in incomplete {
        notes.push(format!(
            "{label} stopped early after a provider failure and is not reported."
        ));
    }

    let mut paths = Vec::new();
    for (format, name) in [
        (ReportFormat::Markdown, "report.md"),
        (ReportFormat::Csv, "report.csv"),
        (ReportFormat::Json, "report.json"),
    ] {
        let mut text = render_report(&summaries, &agreements, &tests, format)?;
        if format == ReportFormat::Markdown && !notes.is_empty() {
            text.push('\n');
            for n in &notes {
                text.push_str(&format!("- {n}\n"));
            }
        }
        let path = out_dir.join(name);
        fs::write(&path, text).map_err(|e| io_err(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}
