//! Result tables: one row per (dataset, splitting, ρ).
//!
//! Columns, in order: `experiment, dataset, splitting, rho, heterogeneity,
//! mean_accuracy_pct, std_accuracy_pct, n_runs`. Heterogeneity is the mean
//! over successful runs in scientific notation with 3 significant digits;
//! accuracies are percentages with 2 decimals.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, ExperimentReport};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Markdown,
    Json,
}

impl FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(TableFormat::Csv),
            "markdown" | "md" => Ok(TableFormat::Markdown),
            "json" => Ok(TableFormat::Json),
            other => Err(Error::Config(format!(
                "unknown table format '{other}' (expected csv, markdown or json)"
            ))),
        }
    }
}

/// One rendered table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub experiment: String,
    pub dataset: String,
    pub splitting: String,
    pub rho: f64,
    pub heterogeneity: String,
    pub mean_accuracy_pct: String,
    pub std_accuracy_pct: String,
    pub n_runs: usize,
}

pub const COLUMNS: [&str; 8] = [
    "experiment",
    "dataset",
    "splitting",
    "rho",
    "heterogeneity",
    "mean_accuracy_pct",
    "std_accuracy_pct",
    "n_runs",
];

fn sci3(v: Option<f64>) -> String {
    match v {
        Some(v) if v.is_finite() => format!("{v:.2e}"),
        _ => "NA".into(),
    }
}

fn pct2(v: f64) -> String {
    if v.is_finite() {
        format!("{:.2}", 100.0 * v)
    } else {
        "NA".into()
    }
}

pub fn table_rows(reports: &[ExperimentReport]) -> Vec<TableRow> {
    reports
        .iter()
        .flat_map(|r| {
            r.aggregates.iter().map(move |a| TableRow {
                experiment: r.name.clone(),
                dataset: r.dataset.clone(),
                splitting: r.splitting.clone(),
                rho: a.rho,
                heterogeneity: sci3(r.heterogeneity_mean),
                mean_accuracy_pct: pct2(a.mean_accuracy),
                std_accuracy_pct: pct2(a.std_accuracy),
                n_runs: a.n_runs,
            })
        })
        .collect()
}

#[derive(Serialize)]
struct JsonTable<'a> {
    columns: &'a [&'a str],
    rows: Vec<TableRow>,
    configs: Vec<&'a ExperimentConfig>,
}

/// Renders the reports as one table.
pub fn emit_table(reports: &[ExperimentReport], format: TableFormat) -> Result<String> {
    if reports.is_empty() || reports.iter().all(|r| r.aggregates.is_empty()) {
        return Err(Error::Data("no results to tabulate".into()));
    }
    let rows = table_rows(reports);
    let cells = |row: &TableRow| {
        vec![
            row.experiment.clone(),
            row.dataset.clone(),
            row.splitting.clone(),
            format!("{}", row.rho),
            row.heterogeneity.clone(),
            row.mean_accuracy_pct.clone(),
            row.std_accuracy_pct.clone(),
            row.n_runs.to_string(),
        ]
    };
    match format {
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(COLUMNS)?;
            for row in &rows {
                w.write_record(cells(row))?;
            }
            let bytes = w
                .into_inner()
                .map_err(|e| Error::Data(format!("csv buffer: {e}")))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
        TableFormat::Markdown => {
            let mut out = format!("| {} |\n", COLUMNS.join(" | "));
            out.push_str(&format!("|{}\n", "---|".repeat(COLUMNS.len())));
            for row in &rows {
                out.push_str(&format!("| {} |\n", cells(row).join(" | ")));
            }
            Ok(out)
        }
        TableFormat::Json => Ok(serde_json::to_string_pretty(&JsonTable {
            columns: &COLUMNS,
            rows,
            configs: reports.iter().map(|r| &r.config).collect(),
        })?),
    }
}

pub fn write_table(
    reports: &[ExperimentReport],
    format: TableFormat,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let text = emit_table(reports, format)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
