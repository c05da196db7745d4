//! Repeated-run multiple-choice benchmarking.
//!
//! Each model answers every question `runs` times. Results land in a binary
//! question × run matrix from which all reported statistics are computed.

pub mod dist;
mod report;
mod stats;

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{info, warn};

use crate::exec::Execution;
use crate::mcq::{Letter, McqQuestion};
use crate::rag::{RagConfig, RagEngine, RagError};
use crate::store::VectorStore;

pub use report::{format_decimal, format_p_value, render_report, ReportFormat};
pub use stats::{
    fleiss_kappa, fleiss_kappa_counts, fleiss_kappa_letters, mean_with_ci, paired_t_test,
    paired_t_test_values, pairwise_comparisons, roca, summarize, summarize_with, unpaired_t_test,
    unpaired_t_test_values, AgreementReport, RocaSummary, TTest, TestMethod, TestResult, TiePolicy,
    DEFAULT_ALPHA, DEFAULT_CONFIDENCE,
};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("run has no questions")]
    EmptyRun,
    #[error("need at least {needed} runs, got {got}")]
    InsufficientRuns { needed: usize, got: usize },
    #[error("matrices cover different question sets")]
    QuestionSetMismatch,
    #[error("matrices have different run counts ({a} vs {b})")]
    RunCountMismatch { a: usize, b: usize },
    #[error("reference model {0:?} not found")]
    UnknownReference(String),
    #[error("label mismatch: {0}")]
    LabelMismatch(String),
    #[error("matrix for {0:?} is incomplete")]
    IncompleteMatrix(String),
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("matrix csv line {line}: {reason}")]
    Csv { line: usize, reason: String },
    #[error("audit log write failed: {0}")]
    Audit(#[from] std::io::Error),
    #[error(transparent)]
    Rag(#[from] RagError),
}

/// Q × R correctness matrix for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkMatrix {
    pub model_label: String,
    pub question_ids: Vec<String>,
    pub runs: usize,
    /// `cells[q][r]` is 1 when run r answered question q correctly.
    pub cells: Vec<Vec<u8>>,
    /// Same shape; true where the completion could not be parsed.
    pub invalid: Vec<Vec<bool>>,
    /// Parsed letters, when the matrix came from a benchmark run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answers: Option<Vec<Vec<Option<Letter>>>>,
    /// False when a fatal backend error cut the run short.
    pub complete: bool,
}

impl BenchmarkMatrix {
    pub fn from_rows(
        model_label: &str,
        question_ids: Vec<String>,
        cells: Vec<Vec<u8>>,
    ) -> Result<Self, BenchError> {
        if question_ids.is_empty() {
            return Err(BenchError::EmptyRun);
        }
        if cells.len() != question_ids.len() {
            return Err(BenchError::InvalidMatrix(format!(
                "{} rows for {} questions",
                cells.len(),
                question_ids.len()
            )));
        }
        let runs = cells[0].len();
        if runs == 0 {
            return Err(BenchError::InsufficientRuns { needed: 1, got: 0 });
        }
        if cells.iter().any(|r| r.len() != runs) {
            return Err(BenchError::InvalidMatrix("ragged rows".into()));
        }
        if cells.iter().flatten().any(|&c| c > 1) {
            return Err(BenchError::InvalidMatrix("cells must be 0 or 1".into()));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = question_ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(BenchError::InvalidMatrix(format!(
                "duplicate question id {dup:?}"
            )));
        }
        Ok(BenchmarkMatrix {
            model_label: model_label.to_string(),
            invalid: vec![vec![false; runs]; question_ids.len()],
            question_ids,
            runs,
            cells,
            answers: None,
            complete: true,
        })
    }

    pub fn questions(&self) -> usize {
        self.question_ids.len()
    }

    pub fn column(&self, run: usize) -> Vec<u8> {
        self.cells.iter().map(|row| row[run]).collect()
    }

    pub fn run_rocas(&self) -> Result<Vec<f64>, BenchError> {
        (0..self.runs).map(|r| roca(&self.column(r))).collect()
    }

    /// Mean correctness of each question over runs.
    pub fn question_means(&self) -> Vec<f64> {
        self.cells
            .iter()
            .map(|row| row.iter().map(|&c| c as f64).sum::<f64>() / self.runs as f64)
            .collect()
    }

    pub fn invalid_rate(&self) -> f64 {
        let total = self.questions() * self.runs;
        if total == 0 {
            return 0.0;
        }
        self.invalid.iter().flatten().filter(|&&i| i).count() as f64 / total as f64
    }

    /// `ID,{label}_1,…,{label}_R` header, one row per question.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("ID");
        for r in 1..=self.runs {
            out.push_str(&format!(",{}_{r}", self.model_label));
        }
        out.push('\n');
        for (id, row) in self.question_ids.iter().zip(&self.cells) {
            out.push_str(id);
            for c in row {
                out.push(',');
                out.push(if *c == 1 { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, BenchError> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(BenchError::Csv {
            line: 1,
            reason: "empty file".into(),
        })?;
        let columns: Vec<&str> = header.split(',').map(str::trim).collect();
        if columns.first() != Some(&"ID") || columns.len() < 2 {
            return Err(BenchError::Csv {
                line: 1,
                reason: "header must be ID,<label>_1,…".into(),
            });
        }
        let mut label = None;
        for (i, col) in columns[1..].iter().enumerate() {
            let expected_suffix = format!("_{}", i + 1);
            let l = col
                .strip_suffix(&expected_suffix)
                .ok_or_else(|| BenchError::Csv {
                    line: 1,
                    reason: format!("column {col:?} should end in {expected_suffix}"),
                })?;
            if label.get_or_insert(l) != &l {
                return Err(BenchError::Csv {
                    line: 1,
                    reason: "columns name different models".into(),
                });
            }
        }
        let label = label.unwrap_or_default();
        let mut ids = Vec::new();
        let mut cells = Vec::new();
        for (i, line) in lines {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != columns.len() {
                return Err(BenchError::Csv {
                    line: i + 1,
                    reason: format!("expected {} fields, found {}", columns.len(), fields.len()),
                });
            }
            let row = fields[1..]
                .iter()
                .map(|f| match *f {
                    "0" => Ok(0u8),
                    "1" => Ok(1u8),
                    other => Err(BenchError::Csv {
                        line: i + 1,
                        reason: format!("cell {other:?} is not 0 or 1"),
                    }),
                })
                .collect::<Result<Vec<_>, _>>()?;
            ids.push(fields[0].to_string());
            cells.push(row);
        }
        Self::from_rows(label, ids, cells)
    }
}

/// One line of the run audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub model_label: String,
    /// 1-based.
    pub run: usize,
    pub question_id: String,
    pub raw_completion: String,
    pub retrieved_ids: Vec<u64>,
    pub parsed: Option<Letter>,
    pub correct: bool,
    pub invalid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchmarkOptions {
    pub runs: usize,
    /// Questions within a run are answered in parallel when enabled.
    pub execution: Execution,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        BenchmarkOptions {
            runs: 10,
            execution: Execution::default(),
        }
    }
}

/// Runs one model. A fatal backend error stops the model; runs finished
/// before it are kept and the matrix is marked incomplete.
pub fn run_model(
    label: &str,
    engine: &RagEngine,
    questions: &[McqQuestion],
    opts: BenchmarkOptions,
    mut audit: Option<&mut (dyn Write + '_)>,
) -> Result<BenchmarkMatrix, BenchError> {
    if questions.is_empty() {
        return Err(BenchError::EmptyRun);
    }
    if opts.runs == 0 {
        return Err(BenchError::InsufficientRuns { needed: 1, got: 0 });
    }
    for q in questions {
        q.validate()
            .map_err(|e| BenchError::InvalidParameter(e.to_string()))?;
    }
    let ids: Vec<String> = questions.iter().map(|q| q.question_id.clone()).collect();
    let mut cells = vec![Vec::with_capacity(opts.runs); questions.len()];
    let mut invalid = vec![Vec::with_capacity(opts.runs); questions.len()];
    let mut answers = vec![Vec::with_capacity(opts.runs); questions.len()];
    let mut complete = true;

    for run in 1..=opts.runs {
        let results = opts.execution.map(questions, |q| engine.answer_mcq(q));
        if let Some(err) = results.iter().find_map(|r| r.as_ref().err()) {
            warn!(model = label, run, error = %err, "aborting model after fatal backend error");
            complete = false;
            break;
        }
        for (qi, (q, result)) in questions.iter().zip(results).enumerate() {
            let answer = result.expect("errors handled above");
            let correct = answer.letter == Some(q.correct);
            cells[qi].push(u8::from(correct));
            invalid[qi].push(answer.letter.is_none());
            answers[qi].push(answer.letter);
            if let Some(w) = audit.as_deref_mut() {
                let record = AuditRecord {
                    model_label: label.to_string(),
                    run,
                    question_id: q.question_id.clone(),
                    raw_completion: answer.raw_completion,
                    retrieved_ids: answer.retrieved_ids,
                    parsed: answer.letter,
                    correct,
                    invalid: answer.letter.is_none(),
                    failure: answer.failure,
                };
                serde_json::to_writer(&mut *w, &record).map_err(std::io::Error::other)?;
                w.write_all(b"\n")?;
            }
        }
        info!(model = label, run, "run finished");
    }

    let runs = cells[0].len();
    Ok(BenchmarkMatrix {
        model_label: label.to_string(),
        question_ids: ids,
        runs,
        cells,
        invalid,
        answers: Some(answers),
        complete,
    })
}

/// Builds an engine per `(label, config)` and runs each in turn.
pub fn run_benchmark(
    models: &[(String, RagConfig)],
    store: Option<Arc<VectorStore>>,
    questions: &[McqQuestion],
    opts: BenchmarkOptions,
    mut audit: Option<&mut (dyn Write + '_)>,
) -> Result<Vec<BenchmarkMatrix>, BenchError> {
    let mut labels = std::collections::HashSet::new();
    if let Some((dup, _)) = models.iter().find(|(l, _)| !labels.insert(l.as_str())) {
        return Err(BenchError::LabelMismatch(format!(
            "duplicate model label {dup:?}"
        )));
    }
    let engines = models
        .iter()
        .map(|(_, cfg)| RagEngine::from_config(cfg, store.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = Vec::with_capacity(models.len());
    for ((label, _), engine) in models.iter().zip(&engines) {
        out.push(run_model(
            label,
            engine,
            questions,
            opts,
            audit.as_deref_mut(),
        )?);
    }
    Ok(out)
}
