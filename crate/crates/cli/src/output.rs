//! Result files.
//!
//! `results.csv` and `results.json` hold only quantities that are fixed by the
//! configuration, so two runs of the same configuration produce identical
//! bytes. Wall-clock times go to `timings.csv`.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use tandem_core::QueueState;

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::runner::CellResult;

pub const RESULTS_CSV: &str = "results.csv";
pub const RESULTS_JSON: &str = "results.json";
pub const TIMINGS_CSV: &str = "timings.csv";
pub const TRAINING_LOG: &str = "training_log.csv";
pub const MODEL_FILE: &str = "model.bin";
pub const TRAJECTORY_CSV: &str = "trajectory.csv";

pub const RESULTS_HEADER: [&str; 15] = [
    "method",
    "lambda_alt",
    "mu1_alt",
    "mu2_alt",
    "kernels",
    "gamma",
    "horizon",
    "rounds",
    "failed_rounds",
    "truth",
    "mean_estimate",
    "rmse",
    "log_weight_corr",
    "status",
    "fingerprint",
];

pub const TIMINGS_HEADER: [&str; 9] = [
    "method",
    "lambda_alt",
    "mu1_alt",
    "mu2_alt",
    "kernels",
    "gamma",
    "rounds",
    "simulation_seconds",
    "training_seconds",
];

#[derive(Debug, Serialize)]
struct JsonCell<'a> {
    method: &'a str,
    lambda_alt: f64,
    mu1_alt: f64,
    mu2_alt: f64,
    kernels: Option<&'a str>,
    gamma: u64,
    horizon: usize,
    rounds: usize,
    failed_rounds: usize,
    truth: f64,
    // NaN has no JSON form
    mean_estimate: Option<f64>,
    rmse: Option<f64>,
    log_weight_corr: Option<f64>,
    status: &'a str,
    first_error: Option<&'a str>,
    estimates: &'a [f64],
}

#[derive(Debug, Serialize)]
struct JsonResults<'a> {
    fingerprint: &'a str,
    config: serde_json::Value,
    cells: Vec<JsonCell<'a>>,
}

fn method_name(cell: &CellResult) -> &'static str {
    cell.key.method.method().name()
}

fn float(v: f64) -> String {
    format!("{v:e}")
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}

pub fn results_csv(cells: &[CellResult], fingerprint: &str) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RESULTS_HEADER).expect("in-memory write");
    for c in cells {
        let k = &c.key;
        w.write_record([
            method_name(c).to_string(),
            float(k.sampled.lambda),
            float(k.sampled.mu1),
            float(k.sampled.mu2),
            k.kernels.clone().unwrap_or_default(),
            k.gamma.to_string(),
            c.horizon.to_string(),
            c.rounds.to_string(),
            c.failed_rounds.to_string(),
            float(c.truth),
            float(c.mean_estimate),
            float(c.rmse),
            c.log_weight_corr.map(float).unwrap_or_default(),
            c.status.as_str().to_string(),
            fingerprint.to_string(),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn timings_csv(cells: &[CellResult]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TIMINGS_HEADER).expect("in-memory write");
    for c in cells {
        let k = &c.key;
        w.write_record([
            method_name(c).to_string(),
            float(k.sampled.lambda),
            float(k.sampled.mu1),
            float(k.sampled.mu2),
            k.kernels.clone().unwrap_or_default(),
            k.gamma.to_string(),
            c.rounds.to_string(),
            format!("{:.3}", c.simulation_seconds),
            format!("{:.3}", c.training_seconds),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// The configuration as recorded in result files: everything the fingerprint
/// covers.
pub fn canonical_config(config: &ExperimentConfig) -> serde_json::Value {
    let mut value = serde_json::to_value(config).expect("configuration serializes");
    if let Some(map) = value.as_object_mut() {
        map.remove("out_dir");
        map.remove("threads");
    }
    value
}

pub fn results_json(cells: &[CellResult], config: &ExperimentConfig, fingerprint: &str) -> Vec<u8> {
    let finite = |v: f64| v.is_finite().then_some(v);
    let doc = JsonResults {
        fingerprint,
        config: canonical_config(config),
        cells: cells
            .iter()
            .map(|c| JsonCell {
                method: method_name(c),
                lambda_alt: c.key.sampled.lambda,
                mu1_alt: c.key.sampled.mu1,
                mu2_alt: c.key.sampled.mu2,
                kernels: c.key.kernels.as_deref(),
                gamma: c.key.gamma,
                horizon: c.horizon,
                rounds: c.rounds,
                failed_rounds: c.failed_rounds,
                truth: c.truth,
                mean_estimate: finite(c.mean_estimate),
                rmse: finite(c.rmse),
                log_weight_corr: c.log_weight_corr.and_then(finite),
                status: c.status.as_str(),
                first_error: c.first_error.as_deref(),
                estimates: &c.estimates,
            })
            .collect(),
    };
    let mut out = serde_json::to_vec_pretty(&doc).expect("results serialize");
    out.push(b'\n');
    out
}

pub fn training_log_csv(losses: &[(usize, f64)]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["iteration", "loss"]).expect("in-memory write");
    for &(i, loss) in losses {
        w.write_record([i.to_string(), float(loss)]).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// One state per line, for debugging.
pub fn trajectory_csv(states: &[QueueState]) -> Vec<u8> {
    let mut out = Vec::with_capacity(states.len() * 6 + 6);
    out.extend_from_slice(b"x1,x2\n");
    for s in states {
        writeln!(out, "{},{}", s.x1, s.x2).expect("in-memory write");
    }
    out
}

pub fn parse_trajectory_csv(path: &Path) -> Result<Vec<QueueState>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut states = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let field = |i: usize| -> Result<u32> {
            record.get(i).and_then(|v| v.trim().parse().ok()).ok_or_else(|| CliError::Parse {
                path: path.to_path_buf(),
                message: format!("row {}: expected two non-negative integers", line + 1),
            })
        };
        states.push(QueueState {
            x1: field(0)?,
            x2: field(1)?,
        });
    }
    Ok(states)
}

pub fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))
}

/// Writes the three benchmark files into `dir`.
pub fn write_benchmark(dir: &Path, cells: &[CellResult], config: &ExperimentConfig) -> Result<()> {
    let fingerprint = config.fingerprint();
    write_file(dir, RESULTS_CSV, &results_csv(cells, &fingerprint))?;
    write_file(dir, RESULTS_JSON, &results_json(cells, config, &fingerprint))?;
    write_file(dir, TIMINGS_CSV, &timings_csv(cells))
}
