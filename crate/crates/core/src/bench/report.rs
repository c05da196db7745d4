//! Table-style benchmark report in markdown, CSV or JSON.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::stats::{index_by_label, AgreementReport, RocaSummary, TestResult};
use super::BenchError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Markdown,
    Csv,
    Json,
}

/// Decimal rounding with ties away from zero.
///
/// The value is first snapped to 10 decimals so that binary noise such as
/// 0.8835000000000001 or 0.88349999999 rounds the way its decimal reading
/// suggests.
pub fn format_decimal(x: f64, places: u32) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    assert!(places <= 9, "at most 9 decimal places");
    let snapped = (x.abs() * 1e10).round() as i128;
    let unit = 10i128.pow(10 - places);
    let mut q = snapped / unit;
    if (snapped % unit) * 2 >= unit {
        q += 1;
    }
    let sign = if x < 0.0 && q != 0 { "-" } else { "" };
    if places == 0 {
        return format!("{sign}{q}");
    }
    let scale = 10i128.pow(places);
    format!(
        "{sign}{}.{:0width$}",
        q / scale,
        q % scale,
        width = places as usize
    )
}

/// Three decimals, or `< 0.001` below that.
pub fn format_p_value(p: f64) -> String {
    if p < 0.001 {
        "< 0.001".to_string()
    } else {
        format_decimal(p, 3)
    }
}

fn mean_cell(s: &RocaSummary) -> String {
    match s.ci {
        Some((lo, hi)) => format!(
            "{} ({}-{})",
            format_decimal(s.mean, 3),
            format_decimal(lo, 3),
            format_decimal(hi, 3)
        ),
        None => format_decimal(s.mean, 3),
    }
}

struct Resolved<'a> {
    summaries: &'a [RocaSummary],
    kappas: Option<Vec<f64>>,
    reference: Option<String>,
    p_values: Vec<Option<f64>>,
}

fn resolve<'a>(
    summaries: &'a [RocaSummary],
    agreements: &[AgreementReport],
    tests: &[TestResult],
) -> Result<Resolved<'a>, BenchError> {
    if summaries.is_empty() {
        return Err(BenchError::LabelMismatch("no models to report".into()));
    }
    let labels: Vec<&str> = summaries.iter().map(|s| s.model_label.as_str()).collect();
    if index_by_label(summaries, |s| &s.model_label).len() != summaries.len() {
        return Err(BenchError::LabelMismatch("duplicate model label".into()));
    }

    let kappas = if agreements.is_empty() {
        None
    } else {
        let by_label = index_by_label(agreements, |a| &a.model_label);
        if by_label.len() != agreements.len() || agreements.len() != labels.len() {
            return Err(BenchError::LabelMismatch(
                "agreement reports do not match the models".into(),
            ));
        }
        Some(
            labels
                .iter()
                .map(|l| {
                    by_label.get(*l).map(|a| a.kappa).ok_or_else(|| {
                        BenchError::LabelMismatch(format!("no agreement report for {l:?}"))
                    })
                })
                .collect::<Result<Vec<_>, _>>()?,
        )
    };

    let reference = tests.first().map(|t| t.model_b.clone());
    if let Some(r) = &reference {
        if !labels.contains(&r.as_str()) {
            return Err(BenchError::LabelMismatch(format!(
                "reference {r:?} is not a reported model"
            )));
        }
        for t in tests {
            if &t.model_b != r {
                return Err(BenchError::LabelMismatch(
                    "tests use more than one reference".into(),
                ));
            }
            if !labels.contains(&t.model_a.as_str()) {
                return Err(BenchError::LabelMismatch(format!(
                    "test model {:?} is not reported",
                    t.model_a
                )));
            }
        }
    }
    let p_values = labels
        .iter()
        .map(|l| tests.iter().find(|t| t.model_a == *l).map(|t| t.p_value))
        .collect();
    Ok(Resolved {
        summaries,
        kappas,
        reference,
        p_values,
    })
}

/// Columns are models in `summaries` order. Rows: mean RoCA with CI,
/// majority-vote RoCA, p-value against the reference (when tests are
/// given), Fleiss' κ (when agreements are given), and the invalid-answer
/// rate when any model produced unparseable answers.
pub fn render_report(
    summaries: &[RocaSummary],
    agreements: &[AgreementReport],
    tests: &[TestResult],
    format: ReportFormat,
) -> Result<String, BenchError> {
    let r = resolve(summaries, agreements, tests)?;
    Ok(match format {
        ReportFormat::Markdown => markdown(&r),
        ReportFormat::Csv => csv(&r),
        ReportFormat::Json => json_report(&r, tests),
    })
}

fn markdown(r: &Resolved<'_>) -> String {
    let mut rows: Vec<(String, Vec<String>)> = Vec::new();
    rows.push((
        "Mean Rate of Correct Answers (95% CI)".into(),
        r.summaries.iter().map(mean_cell).collect(),
    ));
    rows.push((
        "Majority Voting Rate of Correct Answers".into(),
        r.summaries
            .iter()
            .map(|s| format_decimal(s.majority_vote_roca, 3))
            .collect(),
    ));
    if let Some(reference) = &r.reference {
        rows.push((
            format!("p-value (vs {reference})"),
            r.summaries
                .iter()
                .zip(&r.p_values)
                .map(|(s, p)| match p {
                    _ if &s.model_label == reference => "ref.".to_string(),
                    Some(p) => format_p_value(*p),
                    None => "n/a".to_string(),
                })
                .collect(),
        ));
    }
    if let Some(kappas) = &r.kappas {
        rows.push((
            "Fleiss' Kappa Value".into(),
            kappas.iter().map(|k| format_decimal(*k, 3)).collect(),
        ));
    }
    if r.summaries.iter().any(|s| s.invalid_rate > 0.0) {
        rows.push((
            "Invalid Answer Rate".into(),
            r.summaries
                .iter()
                .map(|s| format_decimal(s.invalid_rate, 3))
                .collect(),
        ));
    }

    let mut out = String::from("| |");
    for s in r.summaries {
        out.push_str(&format!(" {} |", s.model_label));
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(r.summaries.len()));
    out.push('\n');
    for (name, cells) in rows {
        out.push_str(&format!("| {name} |"));
        for c in cells {
            out.push_str(&format!(" {c} |"));
        }
        out.push('\n');
    }
    out
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn csv(r: &Resolved<'_>) -> String {
    let mut out = String::from("metric");
    for s in r.summaries {
        out.push(',');
        out.push_str(&s.model_label);
    }
    out.push('\n');
    let mut row = |name: &str, cells: Vec<String>| {
        out.push_str(name);
        for c in cells {
            out.push(',');
            out.push_str(&c);
        }
        out.push('\n');
    };
    row(
        "mean_roca",
        r.summaries.iter().map(|s| s.mean.to_string()).collect(),
    );
    row(
        "ci_low",
        r.summaries.iter().map(|s| opt(s.ci.map(|c| c.0))).collect(),
    );
    row(
        "ci_high",
        r.summaries.iter().map(|s| opt(s.ci.map(|c| c.1))).collect(),
    );
    row(
        "majority_vote_roca",
        r.summaries
            .iter()
            .map(|s| s.majority_vote_roca.to_string())
            .collect(),
    );
    if let Some(reference) = &r.reference {
        row(
            &format!("p_value_vs_{reference}"),
            r.summaries
                .iter()
                .zip(&r.p_values)
                .map(|(s, p)| {
                    if &s.model_label == reference {
                        "ref".into()
                    } else {
                        opt(*p)
                    }
                })
                .collect(),
        );
    }
    if let Some(kappas) = &r.kappas {
        row(
            "fleiss_kappa",
            kappas.iter().map(|k| k.to_string()).collect(),
        );
    }
    row(
        "invalid_rate",
        r.summaries
            .iter()
            .map(|s| s.invalid_rate.to_string())
            .collect(),
    );
    out
}

fn json_report(r: &Resolved<'_>, tests: &[TestResult]) -> String {
    let models: Vec<_> = r
        .summaries
        .iter()
        .enumerate()
        .map(|(i, s)| {
            json!({
                "model_label": s.model_label,
                "run_rocas": s.run_rocas,
                "mean_roca": s.mean,
                "ci_low": s.ci.map(|c| c.0),
                "ci_high": s.ci.map(|c| c.1),
                "confidence": s.confidence,
                "majority_vote_roca": s.majority_vote_roca,
                "invalid_rate": s.invalid_rate,
                "fleiss_kappa": r.kappas.as_ref().map(|k| k[i]),
                "p_value_vs_reference": r.p_values[i],
            })
        })
        .collect();
    let doc = json!({
        "reference": r.reference,
        "models": models,
        "tests": tests,
    });
    serde_json::to_string_pretty(&doc).expect("report serializes")
}
