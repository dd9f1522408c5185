//! Dataset CSV input and JSON / CSV artifacts.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use mprfrail_core::inference::{FrailtyInterval, HazardRatioCurve};
use mprfrail_core::selection::SelectionReport;
use mprfrail_core::simulation::{ParameterSummary, ScenarioSummary};
use mprfrail_core::{Dataset, SurvivalRecord};
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {message}")]
    Row { line: usize, message: String },
    #[error("header: {0}")]
    Header(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] mprfrail_core::Error),
}

pub type Result<T, E = IoError> = std::result::Result<T, E>;

const REQUIRED: [&str; 3] = ["cluster", "time", "status"];

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| IoError::File { path: path.to_path_buf(), source })
}

/// Writes `contents`, creating parent directories as needed.
pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    let wrap = |source| IoError::File { path: path.to_path_buf(), source };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(wrap)?;
    }
    fs::write(path, contents).map_err(wrap)
}

/// Reads `cluster,time,status,<covariates…>`. Errors name the file line.
pub fn read_dataset<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 3 {
        return Err(IoError::Header(format!("expected at least `{}`", REQUIRED.join(","))));
    }
    for (i, want) in REQUIRED.iter().enumerate() {
        if !headers[i].eq_ignore_ascii_case(want) {
            return Err(IoError::Header(format!("column {} is `{}`, expected `{want}`", i + 1, &headers[i])));
        }
    }
    let names: Vec<String> = headers.iter().skip(3).map(str::to_string).collect();

    let mut records = Vec::new();
    for (k, row) in rdr.records().enumerate() {
        let line = k + 2;
        let row = row?;
        let err = |message: String| IoError::Row { line, message };
        if row.len() != headers.len() {
            return Err(err(format!("{} fields, header has {}", row.len(), headers.len())));
        }
        let number = |col: usize| -> Result<f64> {
            let raw = &row[col];
            raw.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| err(format!("{} `{raw}` is not a finite number", &headers[col])))
        };
        let time = number(1)?;
        if time <= 0.0 {
            return Err(err(format!("time must be positive, got {time}")));
        }
        let event = match &row[2] {
            "0" => false,
            "1" => true,
            other => return Err(err(format!("status must be 0 or 1, got `{other}`"))),
        };
        let covariates = (3..row.len()).map(number).collect::<Result<Vec<_>>>()?;
        records.push(SurvivalRecord { cluster: row[0].to_string(), time, event, covariates });
    }
    Ok(Dataset::new(names, records)?)
}

pub fn read_dataset_path(path: &Path) -> Result<Dataset> {
    read_dataset(read_file(path)?.as_bytes())
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, &to_json(value)?)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&read_file(path)?)?)
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| IoError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// `time,hr,lower,upper`.
pub fn hr_csv(curve: &HazardRatioCurve) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["time", "hr", "lower", "upper"])?;
    for j in 0..curve.times.len() {
        w.write_record([curve.times[j], curve.hr[j], curve.lower[j], curve.upper[j]].map(|x| x.to_string()))?;
    }
    finish(w)
}

/// `cluster,size,estimate,lower,upper`; missing bounds are left empty.
pub fn frailties_csv(intervals: &[FrailtyInterval]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["cluster", "size", "estimate", "lower", "upper"])?;
    for f in intervals {
        w.write_record([f.cluster.clone(), f.size.to_string(), f.estimate.to_string(), opt(f.lower), opt(f.upper)])?;
    }
    finish(w)
}

pub fn selection_csv(report: &SelectionReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model", "deviance_r", "df_r", "raic", "delta_raic", "deviance_c", "df_c", "caic", "delta_caic"])?;
    for r in &report.rows {
        w.write_record([
            r.model.clone(),
            format!("{:.4}", r.deviance_r),
            r.df_r.to_string(),
            format!("{:.4}", r.raic),
            format!("{:.4}", r.delta_raic),
            format!("{:.4}", r.deviance_c),
            format!("{:.4}", r.df_c),
            format!("{:.4}", r.caic),
            format!("{:.4}", r.delta_caic),
        ])?;
    }
    finish(w)
}

/// Simulation summary laid out with one column per parameter and rows
/// `true`, `mean`, `se`, `see`. Unavailable entries are empty.
pub fn summary_csv(label: &str, summary: &ScenarioSummary) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["scenario".to_string(), "statistic".to_string()];
    header.extend(summary.parameters.iter().map(|p| p.name.clone()));
    w.write_record(&header)?;
    let fmt = |x: Option<f64>| x.map_or_else(String::new, |v| format!("{v:.6}"));
    let rows: [(&str, fn(&ParameterSummary) -> Option<f64>); 4] =
        [("true", |p| p.truth), ("mean", |p| Some(p.mean)), ("se", |p| p.se), ("see", |p| p.see)];
    for (name, get) in rows.iter() {
        let mut rec = vec![label.to_string(), name.to_string()];
        rec.extend(summary.parameters.iter().map(|p| fmt(get(p))));
        w.write_record(&rec)?;
    }
    finish(w)
}
