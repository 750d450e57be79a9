//! Result tables in the layout of the published ones.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{EvalMode, EvalSummary};

pub const ASCII_COLUMNS: [&str; 4] = ["Model", "Result (%)", "Similarity (%)", "Avg Response Time (s)"];
pub const AUDIO_COLUMNS: [&str; 6] =
    ["Model", "Baseline (%)", "Background (%)", "Gaussian (%)", "Combined (%)", "Avg Response Time (s)"];
/// Environment names in audio column order.
const AUDIO_ENVIRONMENTS: [&str; 4] = ["baseline", "background", "gaussian", "overlap"];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReportError {
    #[error("no summaries to report")]
    EmptyInput,
    #[error("summaries mix {0:?} and {1:?}; report one mode per table")]
    MixedModes(EvalMode, EvalMode),
    #[error("solver {0:?} appears twice in one table")]
    DuplicateRow(String),
    #[error("audio summary for {0:?} lacks an environment")]
    MissingEnvironment(String),
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Table,
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "table" | "md" | "markdown" => Ok(Self::Table),
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

fn ascii_rows(summaries: &[&EvalSummary]) -> Result<Vec<Vec<String>>, ReportError> {
    let mut rows: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for s in summaries {
        let row = vec![
            s.solver.clone(),
            format!("{:.2}", s.full_accuracy_pct),
            s.mean_similarity_pct.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into()),
            format!("{:.4}", s.mean_response_seconds),
        ];
        if rows.insert(&s.solver, row).is_some() {
            return Err(ReportError::DuplicateRow(s.solver.clone()));
        }
    }
    Ok(rows.into_values().collect())
}

fn audio_rows(summaries: &[&EvalSummary]) -> Result<Vec<Vec<String>>, ReportError> {
    let mut by_solver: BTreeMap<&str, [Option<&EvalSummary>; 4]> = BTreeMap::new();
    for s in summaries {
        let env = s.environment.as_deref().ok_or_else(|| ReportError::MissingEnvironment(s.solver.clone()))?;
        let col = AUDIO_ENVIRONMENTS
            .iter()
            .position(|e| *e == env)
            .ok_or_else(|| ReportError::MissingEnvironment(s.solver.clone()))?;
        let slot = &mut by_solver.entry(&s.solver).or_default()[col];
        if slot.replace(s).is_some() {
            return Err(ReportError::DuplicateRow(s.solver.clone()));
        }
    }
    Ok(by_solver
        .into_iter()
        .map(|(solver, cols)| {
            let mut row = vec![solver.to_owned()];
            row.extend(
                cols.iter().map(|c| c.map(|s| format!("{:.1}", s.full_accuracy_pct)).unwrap_or_else(|| "-".into())),
            );
            let (weighted, graded) = cols
                .iter()
                .flatten()
                .fold((0.0, 0usize), |(w, g), s| (w + s.mean_response_seconds * s.graded() as f64, g + s.graded()));
            let time = if graded == 0 { 0.0 } else { weighted / graded as f64 };
            row.push(format!("{time:.2}"));
            row
        })
        .collect())
}

fn markdown(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = format!("| {} |\n", header.join(" | "));
    out.push_str(&format!("|{}\n", "---|".repeat(header.len())));
    for row in rows {
        out.push_str(&format!("| {} |\n", row.join(" | ")));
    }
    out
}

/// Renders summaries of a single mode as a table, CSV or JSON.
///
/// Rows are ordered by solver name. ASCII tables have one row per summary;
/// audio tables have one row per solver with a column per environment and
/// the response time averaged over all graded trials.
pub fn emit_report(summaries: &[EvalSummary], format: ReportFormat) -> Result<Vec<u8>, ReportError> {
    let first = summaries.first().ok_or(ReportError::EmptyInput)?;
    if let Some(other) = summaries.iter().find(|s| s.mode != first.mode) {
        return Err(ReportError::MixedModes(first.mode, other.mode));
    }
    let mut sorted: Vec<&EvalSummary> = summaries.iter().collect();
    sorted.sort_by(|a, b| (&a.solver, &a.environment).cmp(&(&b.solver, &b.environment)));

    if format == ReportFormat::Json {
        let owned: Vec<&EvalSummary> = sorted;
        let mut bytes = serde_json::to_vec_pretty(&owned).expect("summaries serialize");
        bytes.push(b'\n');
        return Ok(bytes);
    }

    let (header, rows): (&[&str], _) = if first.mode == EvalMode::Audio {
        (&AUDIO_COLUMNS, audio_rows(&sorted)?)
    } else {
        (&ASCII_COLUMNS, ascii_rows(&sorted)?)
    };
    match format {
        ReportFormat::Table => {
            let mut out = markdown(header, &rows);
            if let Some(c) = summaries.iter().map(|s| s.concurrency).max().filter(|c| *c > 1) {
                out.push_str(&format!("\nTrials ran with concurrency {c}; response times include queueing.\n"));
            }
            Ok(out.into_bytes())
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(header).map_err(|e| ReportError::Csv(e.to_string()))?;
            for row in &rows {
                w.write_record(row).map_err(|e| ReportError::Csv(e.to_string()))?;
            }
            w.into_inner().map_err(|e| ReportError::Csv(e.to_string()))
        }
        ReportFormat::Json => unreachable!("handled above"),
    }
}

/// Parses the JSON report format back into summaries.
pub fn parse_json_report(bytes: &[u8]) -> Result<Vec<EvalSummary>, serde_json::Error> {
    serde_json::from_slice(bytes)
}
