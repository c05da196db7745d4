//! Statistics over correctness matrices.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::dist::{t_quantile, t_two_sided_p};
use super::{BenchError, BenchmarkMatrix};

pub const DEFAULT_CONFIDENCE: f64 = 0.95;
pub const DEFAULT_ALPHA: f64 = 0.05;

/// Correct answers over questions for one run.
pub fn roca(column: &[u8]) -> Result<f64, BenchError> {
    if column.is_empty() {
        return Err(BenchError::EmptyRun);
    }
    Ok(column.iter().map(|&c| c as f64).sum::<f64>() / column.len() as f64)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn sample_sd(values: &[f64], mean: f64) -> f64 {
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Mean and Student-t interval `mean ± t_{(1+c)/2, n-1} · s/√n`. The
/// interval is `None` for fewer than two values.
pub fn mean_with_ci(
    values: &[f64],
    confidence: f64,
) -> Result<(f64, Option<(f64, f64)>), BenchError> {
    if values.is_empty() {
        return Err(BenchError::EmptyRun);
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(BenchError::InvalidParameter(format!(
            "confidence {confidence} outside (0, 1)"
        )));
    }
    let m = mean(values);
    if values.len() < 2 {
        return Ok((m, None));
    }
    let n = values.len() as f64;
    let half = t_quantile((1.0 + confidence) / 2.0, n - 1.0) * sample_sd(values, m) / n.sqrt();
    Ok((m, Some((m - half, m + half))))
}

/// How a question whose runs split exactly in half is scored.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    #[default]
    Incorrect,
    Correct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocaSummary {
    pub model_label: String,
    pub run_rocas: Vec<f64>,
    pub mean: f64,
    /// `(low, high)`; absent with a single run.
    pub ci: Option<(f64, f64)>,
    pub confidence: f64,
    pub majority_vote_roca: f64,
    pub invalid_rate: f64,
}

pub fn summarize(matrix: &BenchmarkMatrix, confidence: f64) -> Result<RocaSummary, BenchError> {
    summarize_with(matrix, confidence, TiePolicy::default())
}

pub fn summarize_with(
    matrix: &BenchmarkMatrix,
    confidence: f64,
    ties: TiePolicy,
) -> Result<RocaSummary, BenchError> {
    if !matrix.complete {
        return Err(BenchError::IncompleteMatrix(matrix.model_label.clone()));
    }
    let run_rocas = (0..matrix.runs)
        .map(|r| roca(&matrix.column(r)))
        .collect::<Result<Vec<_>, _>>()?;
    let (mean, ci) = mean_with_ci(&run_rocas, confidence)?;
    let runs = matrix.runs;
    let majority = matrix
        .cells
        .iter()
        .filter(|row| {
            let ones = row.iter().filter(|&&c| c == 1).count();
            2 * ones > runs || (2 * ones == runs && ties == TiePolicy::Correct)
        })
        .count();
    Ok(RocaSummary {
        model_label: matrix.model_label.clone(),
        run_rocas,
        mean,
        ci,
        confidence,
        majority_vote_roca: majority as f64 / matrix.question_ids.len() as f64,
        invalid_rate: matrix.invalid_rate(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub model_label: String,
    pub kappa: f64,
    pub categories: usize,
}

/// Fleiss' κ from per-item category counts; every row must sum to the same
/// rater count n ≥ 2. Returns 1 when expected agreement is 1.
pub fn fleiss_kappa_counts(counts: &[Vec<usize>]) -> Result<f64, BenchError> {
    if counts.is_empty() {
        return Err(BenchError::EmptyRun);
    }
    let n: usize = counts[0].iter().sum();
    if n < 2 {
        return Err(BenchError::InsufficientRuns { needed: 2, got: n });
    }
    if counts
        .iter()
        .any(|row| row.iter().sum::<usize>() != n || row.len() != counts[0].len())
    {
        return Err(BenchError::InvalidMatrix(
            "rows have differing rater counts".into(),
        ));
    }
    let items = counts.len() as f64;
    let nf = n as f64;
    let cats = counts[0].len();
    let p_e: f64 = (0..cats)
        .map(|j| {
            let p = counts.iter().map(|row| row[j] as f64).sum::<f64>() / (items * nf);
            p * p
        })
        .sum();
    if p_e == 1.0 {
        return Ok(1.0);
    }
    let p_bar = counts
        .iter()
        .map(|row| {
            let sq: f64 = row.iter().map(|&c| (c * c) as f64).sum();
            (sq - nf) / (nf * (nf - 1.0))
        })
        .sum::<f64>()
        / items;
    Ok((p_bar - p_e) / (1.0 - p_e))
}

/// κ with runs as raters and {correct, incorrect} as categories.
pub fn fleiss_kappa(matrix: &BenchmarkMatrix) -> Result<AgreementReport, BenchError> {
    if matrix.runs < 2 {
        return Err(BenchError::InsufficientRuns {
            needed: 2,
            got: matrix.runs,
        });
    }
    let counts: Vec<Vec<usize>> = matrix
        .cells
        .iter()
        .map(|row| {
            let ones = row.iter().filter(|&&c| c == 1).count();
            vec![ones, row.len() - ones]
        })
        .collect();
    Ok(AgreementReport {
        model_label: matrix.model_label.clone(),
        kappa: fleiss_kappa_counts(&counts)?,
        categories: 2,
    })
}

/// κ over the chosen letters themselves (INVALID is its own category).
/// Needs a matrix produced by a benchmark run, which logs the letters.
pub fn fleiss_kappa_letters(matrix: &BenchmarkMatrix) -> Result<AgreementReport, BenchError> {
    if matrix.runs < 2 {
        return Err(BenchError::InsufficientRuns {
            needed: 2,
            got: matrix.runs,
        });
    }
    let answers = matrix
        .answers
        .as_ref()
        .ok_or_else(|| BenchError::InvalidMatrix("matrix carries no answer letters".into()))?;
    // Category 0 is INVALID, 1..=5 are A..E.
    let counts: Vec<Vec<usize>> = answers
        .iter()
        .map(|row| {
            let mut c = vec![0usize; 6];
            for a in row {
                c[a.map_or(0, |l| l.index() + 1)] += 1;
            }
            c
        })
        .collect();
    let used = (0..6)
        .filter(|&j| counts.iter().any(|row| row[j] > 0))
        .count();
    Ok(AgreementReport {
        model_label: matrix.model_label.clone(),
        kappa: fleiss_kappa_counts(&counts)?,
        categories: used,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    /// Per-question mean correctness, paired across the two models.
    #[default]
    PairedQuestions,
    /// Run RoCAs as two independent samples (pooled variance).
    UnpairedRuns,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t_stat: f64,
    pub p_value: f64,
    pub n: usize,
    pub df: f64,
    /// Zero variance with a non-zero mean difference; p is reported as 0.
    pub degenerate: bool,
}

fn t_from(diff: f64, se: f64, n: usize, df: f64) -> TTest {
    if se == 0.0 || !se.is_finite() {
        let (t_stat, p_value) = if diff == 0.0 {
            (0.0, 1.0)
        } else {
            (diff.signum() * f64::INFINITY, 0.0)
        };
        return TTest {
            t_stat,
            p_value,
            n,
            df,
            degenerate: diff != 0.0,
        };
    }
    let t_stat = diff / se;
    TTest {
        t_stat,
        p_value: t_two_sided_p(t_stat, df),
        n,
        df,
        degenerate: false,
    }
}

/// Paired two-sided t-test on equal-length samples.
pub fn paired_t_test_values(x: &[f64], y: &[f64]) -> Result<TTest, BenchError> {
    if x.len() != y.len() {
        return Err(BenchError::QuestionSetMismatch);
    }
    if x.len() < 2 {
        return Err(BenchError::InsufficientRuns {
            needed: 2,
            got: x.len(),
        });
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let n = d.len();
    let d_bar = mean(&d);
    let se = sample_sd(&d, d_bar) / (n as f64).sqrt();
    Ok(t_from(d_bar, se, n, (n - 1) as f64))
}

/// Student two-sample t-test with pooled variance.
pub fn unpaired_t_test_values(x: &[f64], y: &[f64]) -> Result<TTest, BenchError> {
    if x.len() < 2 || y.len() < 2 {
        return Err(BenchError::InsufficientRuns {
            needed: 2,
            got: x.len().min(y.len()),
        });
    }
    let (mx, my) = (mean(x), mean(y));
    let (nx, ny) = (x.len() as f64, y.len() as f64);
    let ss: f64 = x.iter().map(|v| (v - mx).powi(2)).sum::<f64>()
        + y.iter().map(|v| (v - my).powi(2)).sum::<f64>();
    let df = nx + ny - 2.0;
    let se = (ss / df * (1.0 / nx + 1.0 / ny)).sqrt();
    Ok(t_from(mx - my, se, x.len() + y.len(), df))
}

fn check_pair(a: &BenchmarkMatrix, b: &BenchmarkMatrix) -> Result<(), BenchError> {
    if a.question_ids != b.question_ids {
        return Err(BenchError::QuestionSetMismatch);
    }
    if a.runs != b.runs {
        return Err(BenchError::RunCountMismatch {
            a: a.runs,
            b: b.runs,
        });
    }
    Ok(())
}

pub fn paired_t_test(a: &BenchmarkMatrix, b: &BenchmarkMatrix) -> Result<TTest, BenchError> {
    check_pair(a, b)?;
    paired_t_test_values(&a.question_means(), &b.question_means())
}

pub fn unpaired_t_test(a: &BenchmarkMatrix, b: &BenchmarkMatrix) -> Result<TTest, BenchError> {
    check_pair(a, b)?;
    unpaired_t_test_values(&a.run_rocas()?, &b.run_rocas()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub model_a: String,
    pub model_b: String,
    pub method: TestMethod,
    pub t_stat: f64,
    pub p_value: f64,
    pub n: usize,
    pub df: f64,
    pub degenerate: bool,
    pub alpha: f64,
    pub m: usize,
    pub adjusted_alpha: f64,
    pub significant: bool,
}

/// Every non-reference model against `reference` at Bonferroni-adjusted
/// `alpha / m`. `m` defaults to the number of tests performed.
pub fn pairwise_comparisons(
    matrices: &[BenchmarkMatrix],
    reference: &str,
    alpha: f64,
    m: Option<usize>,
    method: TestMethod,
) -> Result<Vec<TestResult>, BenchError> {
    let reference_matrix = matrices
        .iter()
        .find(|mx| mx.model_label == reference)
        .ok_or_else(|| BenchError::UnknownReference(reference.to_string()))?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(BenchError::InvalidParameter(format!(
            "alpha {alpha} outside (0, 1)"
        )));
    }
    let others: Vec<&BenchmarkMatrix> = matrices
        .iter()
        .filter(|mx| mx.model_label != reference)
        .collect();
    let m = m.unwrap_or(others.len()).max(1);
    let adjusted_alpha = alpha / m as f64;
    others
        .into_iter()
        .map(|a| {
            let t = match method {
                TestMethod::PairedQuestions => paired_t_test(a, reference_matrix)?,
                TestMethod::UnpairedRuns => unpaired_t_test(a, reference_matrix)?,
            };
            Ok(TestResult {
                model_a: a.model_label.clone(),
                model_b: reference.to_string(),
                method,
                t_stat: t.t_stat,
                p_value: t.p_value,
                n: t.n,
                df: t.df,
                degenerate: t.degenerate,
                alpha,
                m,
                adjusted_alpha,
                significant: t.p_value < adjusted_alpha,
            })
        })
        .collect()
}

/// Per-label lookup helper used by the report.
pub(crate) fn index_by_label<T>(items: &[T], label: impl Fn(&T) -> &str) -> BTreeMap<String, &T> {
    items.iter().map(|i| (label(i).to_string(), i)).collect()
}
