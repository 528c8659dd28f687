use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CaseError;

/// A thermal limit exceeded in the verification solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub hour: usize,
    pub branch: usize,
    pub flow: f64,
    pub limit: f64,
}

/// One row of a technique comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub technique: String,
    pub params: String,
    pub status: String,
    pub computed_profit: f64,
    pub actual_profit: f64,
    pub profit_diff_pct: f64,
    pub duality_gap_pct: f64,
    pub computed_expenses: f64,
    pub actual_expenses: f64,
    pub wall_time_s: f64,
    pub iterations: usize,
    pub nodes: Option<usize>,
    pub mip_gap: Option<f64>,
    pub outer_iteration: usize,
    pub violations: Vec<Violation>,
}

impl SolveReport {
    /// A row for a run that produced no usable solution.
    pub fn failed(technique: &str, params: &str, status: &str) -> Self {
        Self {
            technique: technique.into(),
            params: params.into(),
            status: status.into(),
            computed_profit: f64::NAN,
            actual_profit: f64::NAN,
            profit_diff_pct: f64::NAN,
            duality_gap_pct: f64::NAN,
            computed_expenses: f64::NAN,
            actual_expenses: f64::NAN,
            wall_time_s: 0.0,
            iterations: 0,
            nodes: None,
            mip_gap: None,
            outer_iteration: 0,
            violations: Vec::new(),
        }
    }

    fn csv_record(&self) -> Vec<String> {
        let num = |v: f64, prec: usize| if v.is_finite() { format!("{v:.prec$}") } else { String::new() };
        let sci = |v: f64| if v.is_finite() { format!("{v:.1e}") } else { String::new() };
        vec![
            self.technique.clone(),
            self.params.clone(),
            self.status.clone(),
            num(self.actual_profit, 2),
            num(self.computed_profit, 2),
            sci(self.profit_diff_pct),
            sci(self.duality_gap_pct),
            num(self.actual_expenses, 2),
            num(self.computed_expenses, 2),
            format!("{:.3}", self.wall_time_s),
            self.iterations.to_string(),
            self.nodes.map(|n| n.to_string()).unwrap_or_default(),
            self.mip_gap.map(sci).unwrap_or_default(),
            self.violations.len().to_string(),
        ]
    }
}

const CSV_HEADER: [&str; 14] = [
    "technique",
    "params",
    "status",
    "actual_profit",
    "computed_profit",
    "diff_pct",
    "gap_pct",
    "actual_expenses",
    "computed_expenses",
    "time_s",
    "iterations",
    "nodes",
    "mip_gap",
    "violations",
];

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut p = stem.as_os_str().to_owned();
    p.push(".");
    p.push(ext);
    PathBuf::from(p)
}

/// Writes `<stem>.json` and `<stem>.csv` for one report, replacing any
/// previous contents.
pub fn write_report(report: &SolveReport, stem: &Path) -> Result<(PathBuf, PathBuf), CaseError> {
    write_reports(std::slice::from_ref(report), stem)
}

/// Writes a list of reports: a JSON array and a CSV table.
pub fn write_reports(reports: &[SolveReport], stem: &Path) -> Result<(PathBuf, PathBuf), CaseError> {
    let json_path = with_ext(stem, "json");
    let csv_path = with_ext(stem, "csv");
    let json = if reports.len() == 1 {
        serde_json::to_string_pretty(&reports[0])?
    } else {
        serde_json::to_string_pretty(reports)?
    };
    std::fs::write(&json_path, json + "\n")?;
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(CSV_HEADER)?;
    for r in reports {
        w.write_record(r.csv_record())?;
    }
    w.flush()?;
    Ok((json_path, csv_path))
}
