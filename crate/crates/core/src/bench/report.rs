//! Result tables: per-(model, eps) clean and robust accuracy.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Fixed CSV column order.
pub const CSV_HEADER: [&str; 5] = ["model", "eps", "clean_acc", "robust_acc", "seconds"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub eps: f64,
    pub clean_acc: f64,
    pub robust_acc: f64,
    /// Wall time of the robust evaluation; zero in strict-deterministic mode.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    /// The experiment specification that produced the report.
    pub config: serde_json::Value,
    pub cost_config_hash: String,
    pub runs: Vec<RunReport>,
    /// Per-(model, eps) means over runs, in first-run order.
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn new(config: serde_json::Value, cost_config_hash: String, runs: Vec<RunReport>) -> Result<Self> {
        let rows = average_runs(&runs)?;
        let report = Self {
            config,
            cost_config_hash,
            runs,
            rows,
        };
        report.validate()?;
        Ok(report)
    }

    pub fn validate(&self) -> Result<()> {
        let all = self.rows.iter().chain(self.runs.iter().flat_map(|r| &r.rows));
        for row in all {
            for acc in [row.clean_acc, row.robust_acc] {
                if !(0.0..=1.0).contains(&acc) {
                    return Err(invalid(format!("accuracy {acc} for '{}' outside [0, 1]", row.model)));
                }
            }
        }
        Ok(())
    }

    /// The averaged row for a model at a budget.
    pub fn row(&self, model: &str, eps: f64) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.model == model && r.eps == eps)
    }

    /// Model names in report order.
    pub fn models(&self) -> Vec<&str> {
        let mut names: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !names.contains(&r.model.as_str()) {
                names.push(&r.model);
            }
        }
        names
    }
}

fn average_runs(runs: &[RunReport]) -> Result<Vec<ReportRow>> {
    let Some(first) = runs.first() else {
        return Ok(Vec::new());
    };
    let n = runs.len() as f64;
    first
        .rows
        .iter()
        .enumerate()
        .map(|(i, head)| {
            let mut acc = ReportRow {
                clean_acc: 0.0,
                robust_acc: 0.0,
                seconds: 0.0,
                ..head.clone()
            };
            for run in runs {
                let r = run
                    .rows
                    .get(i)
                    .filter(|r| r.model == head.model && r.eps == head.eps)
                    .ok_or_else(|| invalid(format!("run for seed {} has a different row layout", run.seed)))?;
                acc.clean_acc += r.clean_acc;
                acc.robust_acc += r.robust_acc;
                acc.seconds += r.seconds;
            }
            acc.clean_acc /= n;
            acc.robust_acc /= n;
            Ok(acc)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(Self::Table),
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::Config(format!("unknown report format '{other}' (table, csv, json)"))),
        }
    }
}

pub fn emit_report(report: &Report, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => Ok(serde_json::to_string_pretty(report)? + "\n"),
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(CSV_HEADER)?;
            for r in &report.rows {
                w.write_record([
                    r.model.clone(),
                    r.eps.to_string(),
                    format!("{:.6}", r.clean_acc),
                    format!("{:.6}", r.robust_acc),
                    format!("{:.3}", r.seconds),
                ])?;
            }
            let bytes = w.into_inner().map_err(|e| invalid(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| invalid(e.to_string()))
        }
        ReportFormat::Table => Ok(table(report)),
    }
}

fn table(report: &Report) -> String {
    let width = report.rows.iter().map(|r| r.model.len()).max().unwrap_or(0).max(5);
    let mut out = String::new();
    let seeds: Vec<String> = report.runs.iter().map(|r| r.seed.to_string()).collect();
    let _ = writeln!(out, "seeds: {}", seeds.join(", "));
    let _ = writeln!(
        out,
        "{:<width$}  {:>8}  {:>9}  {:>10}  {:>8}",
        "model", "eps", "clean_acc", "robust_acc", "seconds"
    );
    let _ = writeln!(out, "{}", "-".repeat(width + 45));
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>8}  {:>9.4}  {:>10.4}  {:>8.2}",
            r.model, r.eps, r.clean_acc, r.robust_acc, r.seconds
        );
    }
    out
}
