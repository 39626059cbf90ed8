//! Measurement rows and their CSV form.
//!
//! Every experiment writes the same columns:
//!
//! | column       | meaning                                                  |
//! |--------------|----------------------------------------------------------|
//! | `experiment` | measurement label, e.g. `grad-error` or `train-curve`    |
//! | `seed`       | run index within the experiment; empty for exact rows    |
//! | `beta`       | discount used by the estimator                           |
//! | `t_or_steps` | sample-path length, or cumulative simulation steps       |
//! | `value`      | the measured quantity (relative error, or exact `η`)     |
//! | `wall_ms`    | wall-clock time of the run; 0 unless timing is enabled   |
//!
//! Floating-point fields are written in scientific notation with 17
//! significant digits, which reproduces every `f64` exactly on parse.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const HEADER: [&str; 6] = [
    "experiment",
    "seed",
    "beta",
    "t_or_steps",
    "value",
    "wall_ms",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub experiment: String,
    pub seed: Option<u64>,
    pub beta: f64,
    pub t_or_steps: u64,
    pub value: f64,
    pub wall_ms: f64,
}

impl RunRecord {
    pub fn new(
        experiment: &str,
        seed: Option<u64>,
        beta: f64,
        t_or_steps: u64,
        value: f64,
    ) -> Self {
        Self {
            experiment: experiment.to_string(),
            seed,
            beta,
            t_or_steps,
            value,
            wall_ms: 0.0,
        }
    }
}

/// Deterministic order: label, then β, then step count, then seed (exact
/// rows without a seed first).
pub fn sort_records(records: &mut [RunRecord]) {
    records.sort_by(|a, b| {
        a.experiment
            .cmp(&b.experiment)
            .then(a.beta.total_cmp(&b.beta))
            .then(a.t_or_steps.cmp(&b.t_or_steps))
            .then(a.seed.cmp(&b.seed))
    });
}

pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Serialize, Deserialize)]
struct Row {
    experiment: String,
    seed: Option<u64>,
    beta: String,
    t_or_steps: u64,
    value: String,
    wall_ms: String,
}

fn parse_f64(field: &str, text: &str) -> std::result::Result<f64, String> {
    text.parse()
        .map_err(|e| format!("column {field}: {text:?}: {e}"))
}

/// Writes `records` as CSV with the documented header.
pub fn emit_csv(records: &[RunRecord], path: &Path) -> Result<()> {
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(csv_err)?;
    writer.write_record(HEADER).map_err(csv_err)?;
    for r in records {
        writer
            .serialize(Row {
                experiment: r.experiment.clone(),
                seed: r.seed,
                beta: format_f64(r.beta),
                t_or_steps: r.t_or_steps,
                value: format_f64(r.value),
                wall_ms: format_f64(r.wall_ms),
            })
            .map_err(csv_err)?;
    }
    writer.flush().map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Reads back a file written by [`emit_csv`].
pub fn read_csv(path: &Path) -> Result<Vec<RunRecord>> {
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = reader.headers().map_err(csv_err)?.clone();
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(CliError::Config(format!(
            "{}: unexpected CSV header {:?}",
            path.display(),
            header
        )));
    }
    let mut out = Vec::new();
    for row in reader.deserialize::<Row>() {
        let row = row.map_err(csv_err)?;
        let parsed = (|| {
            Ok::<_, String>(RunRecord {
                beta: parse_f64("beta", &row.beta)?,
                value: parse_f64("value", &row.value)?,
                wall_ms: parse_f64("wall_ms", &row.wall_ms)?,
                experiment: row.experiment,
                seed: row.seed,
                t_or_steps: row.t_or_steps,
            })
        })()
        .map_err(|m| CliError::Config(format!("{}: {m}", path.display())))?;
        out.push(parsed);
    }
    Ok(out)
}
