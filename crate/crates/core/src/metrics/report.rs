//! Score tables: one row per method with Brier, accuracy and ensemble
//! spread, and a calibration-index table.

use serde::{Deserialize, Serialize};

use super::CalibrationBin;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub method: String,
    pub n: usize,
    pub brier: f64,
    pub accuracy: f64,
    /// Mean per-question population std of ensemble members; `None` for
    /// single-valued methods such as the crowd.
    pub std: Option<f64>,
    /// `None` when fewer scored questions than bins.
    pub calibration_index: Option<f64>,
    pub bins: Vec<CalibrationBin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub methods: Vec<MethodScore>,
    pub dropped: Vec<String>,
    pub unresolved_excluded: usize,
    pub bins: usize,
    pub std_definition: String,
}

pub fn format_report(report: &ScoreReport) -> String {
    let n = report.methods.first().map_or(0, |m| m.n);
    let mut out = format!(
        "Scored questions: {n} (dropped {}, unresolved excluded {})\n\n",
        report.dropped.len(),
        report.unresolved_excluded
    );
    out.push_str("| Method | Brier | Acc % | Std |\n|---|---|---|---|\n");
    for m in &report.methods {
        let std = m.std.map_or_else(|| "-".to_string(), |s| format!("{s:.3}"));
        out.push_str(&format!(
            "| {} | {:.3} | {:.1} | {} |\n",
            cell(&m.method),
            m.brier,
            m.accuracy * 100.0,
            std
        ));
    }
    out.push_str(&format!(
        "\nCalibration ({} quantile bins)\n\n| Method | Calibration Index |\n|---|---|\n",
        report.bins
    ));
    for m in &report.methods {
        let ci = m
            .calibration_index
            .map_or_else(|| "-".to_string(), |c| format!("{c:.3}"));
        out.push_str(&format!("| {} | {} |\n", cell(&m.method), ci));
    }
    out
}

fn cell(label: &str) -> String {
    label.replace('|', "/")
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportTables {
    /// (method, brier, accuracy percent, std)
    pub scores: Vec<(String, f64, f64, Option<f64>)>,
    /// (method, calibration index)
    pub calibration: Vec<(String, Option<f64>)>,
}

/// Reads the two tables produced by [`format_report`] back into numbers.
pub fn parse_report_tables(text: &str) -> Result<ReportTables, String> {
    let mut tables = ReportTables::default();
    let mut header: Option<Vec<String>> = None;
    for line in text.lines().map(str::trim) {
        if !line.starts_with('|') {
            header = None;
            continue;
        }
        let cells: Vec<String> = line
            .trim_matches('|')
            .split('|')
            .map(|c| c.trim().to_string())
            .collect();
        if cells.iter().all(|c| c.chars().all(|ch| ch == '-')) {
            continue;
        }
        let Some(h) = &header else {
            header = Some(cells);
            continue;
        };
        let num = |s: &str| -> Result<Option<f64>, String> {
            if s == "-" {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| format!("bad number {s:?}"))
            }
        };
        match h.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
            ["Method", "Brier", "Acc %", "Std"] => {
                if cells.len() != 4 {
                    return Err(format!("expected 4 cells in {line:?}"));
                }
                let brier = num(&cells[1])?.ok_or("missing Brier")?;
                let acc = num(&cells[2])?.ok_or("missing Acc %")?;
                tables
                    .scores
                    .push((cells[0].clone(), brier, acc, num(&cells[3])?));
            }
            ["Method", "Calibration Index"] => {
                if cells.len() != 2 {
                    return Err(format!("expected 2 cells in {line:?}"));
                }
                tables.calibration.push((cells[0].clone(), num(&cells[1])?));
            }
            other => return Err(format!("unrecognised table header {other:?}")),
        }
    }
    Ok(tables)
}
