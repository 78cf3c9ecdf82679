//! Report files: correlation maps as CSV, summaries as JSON, and a long
//! per-sample CSV for plotting.

use std::fs;
use std::path::Path;

use serde::Serialize;

use super::{AnalysisError, CorrelationReport, TransferReport};

pub const REPORT_FORMAT_VERSION: u32 = 1;

fn report_err(path: &Path, e: impl ToString) -> AnalysisError {
    AnalysisError::Report {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn cell(v: Option<f64>) -> String {
    // `{}` on f64 prints the shortest representation that parses back exactly.
    v.map_or_else(|| "null".to_string(), |x| x.to_string())
}

fn write_matrix(path: &Path, names: &[String], map: &[Vec<Option<f64>>]) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| report_err(path, e))?;
    let mut header = vec!["joint".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header).map_err(|e| report_err(path, e))?;
    for (name, row) in names.iter().zip(map) {
        let mut rec = vec![name.clone()];
        rec.extend(row.iter().map(|v| cell(*v)));
        w.write_record(&rec).map_err(|e| report_err(path, e))?;
    }
    w.flush().map_err(|e| report_err(path, e))
}

/// A parsed correlation-map CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixCsv {
    pub column_names: Vec<String>,
    pub row_names: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<MatrixCsv, AnalysisError> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| report_err(path, e))?;
    let header = r.headers().map_err(|e| report_err(path, e))?.clone();
    let column_names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut row_names = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| report_err(path, e))?;
        if rec.len() != column_names.len() + 1 {
            return Err(report_err(path, format!("row {} has {} fields", i + 1, rec.len())));
        }
        row_names.push(rec[0].to_string());
        let row = rec
            .iter()
            .skip(1)
            .map(|s| match s {
                "null" => Ok(None),
                s => s.parse::<f64>().map(Some).map_err(|e| report_err(path, format!("row {}: {s:?}: {e}", i + 1))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        values.push(row);
    }
    Ok(MatrixCsv {
        column_names,
        row_names,
        values,
    })
}

#[derive(Serialize)]
struct Versioned<'a, R> {
    format_version: u32,
    #[serde(flatten)]
    report: &'a R,
}

fn write_json<R: Serialize>(path: &Path, report: &R) -> Result<(), AnalysisError> {
    let doc = Versioned {
        format_version: REPORT_FORMAT_VERSION,
        report,
    };
    let text = serde_json::to_string_pretty(&doc).map_err(|e| report_err(path, e))?;
    fs::write(path, text + "\n").map_err(|e| report_err(path, e))
}

/// Writes `disp_disp.csv`, `disp_vel.csv`, `disp_acc.csv`, `summary.json`
/// and `samples.csv` into `out_dir`.
pub fn write_reports(report: &CorrelationReport, out_dir: impl AsRef<Path>) -> Result<(), AnalysisError> {
    let dir = out_dir.as_ref();
    if report.sample_count == 0 {
        return Err(report_err(dir, "empty sample set"));
    }
    fs::create_dir_all(dir).map_err(|e| report_err(dir, e))?;
    for (file, map) in [
        ("disp_disp.csv", &report.disp_disp),
        ("disp_vel.csv", &report.disp_vel),
        ("disp_acc.csv", &report.disp_acc),
    ] {
        write_matrix(&dir.join(file), &report.joint_names, map)?;
    }
    write_json(&dir.join("summary.json"), report)?;

    let path = dir.join("samples.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| report_err(&path, e))?;
    w.write_record(["sample", "joint", "displacement", "speed", "acceleration"])
        .map_err(|e| report_err(&path, e))?;
    for s in &report.samples {
        for (j, name) in report.joint_names.iter().enumerate() {
            w.write_record([
                s.id.clone(),
                name.clone(),
                s.displacement[j].to_string(),
                s.speed[j].to_string(),
                s.acceleration[j].to_string(),
            ])
            .map_err(|e| report_err(&path, e))?;
        }
    }
    w.flush().map_err(|e| report_err(&path, e))
}

pub fn write_transfer_report(report: &TransferReport, path: impl AsRef<Path>) -> Result<(), AnalysisError> {
    write_json(path.as_ref(), report)
}
