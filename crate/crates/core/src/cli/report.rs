// SPDX-License-Identifier: Apache-2.0

//! CSV and JSON report writers.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::config::OutputFormat;
use super::run::RunReport;
use super::CliError;

pub const CSV_HEADER: [&str; 5] = [
    "point_index",
    "param_value",
    "period_T",
    "identity_distance",
    "fidelity",
];

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

/// One row per sweep point; absent values are empty cells.
pub fn write_csv<W: Write>(report: &RunReport, out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for p in &report.points {
        w.write_record([
            p.point_index.to_string(),
            cell(p.param_value),
            cell(p.period_t),
            cell(p.identity_distance),
            cell(p.fidelity),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_json(report: &RunReport) -> Result<String, CliError> {
    Ok(serde_json::to_string_pretty(report)?)
}

/// Writes `<dir>/<name>.<ext>` and returns its path.
pub fn emit_report(report: &RunReport, format: OutputFormat, dir: &Path) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir)?;
    let (ext, body) = match format {
        OutputFormat::Csv => {
            let mut buf = Vec::new();
            write_csv(report, &mut buf)?;
            ("csv", buf)
        }
        OutputFormat::Json => ("json", to_json(report)?.into_bytes()),
    };
    let path = dir.join(format!("{}.{ext}", report.config.output.name));
    fs::write(&path, body)?;
    Ok(path)
}
