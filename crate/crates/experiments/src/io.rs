//! File formats shared by the subcommands.
//!
//! CSV tables start with a `# schema: <name>/v<version>` line followed by a
//! header row. JSON containers:
//!
//! * signal: `{"values": [...], "bandlimit": B | null, "seed": s | null}`
//! * batch: `{"params": {"M", "L", "sigma", "N", "seed"}, "rows": [[...]],
//!   "seed": s, "true_shifts": [...] | null}`

use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::Path;

use mra_core::{Batch, ModelParams, Signal};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::experiments::ExperimentOutput;

pub const RESULTS_SCHEMA: &str = "results/v1";
pub const SUMMARY_SCHEMA: &str = "summary/v1";
pub const PER_FREQUENCY_SCHEMA: &str = "per_frequency/v1";
pub const OVERLAY_SCHEMA: &str = "overlay/v1";
pub const IDENTIFIABILITY_SCHEMA: &str = "identifiability/v1";
pub const SIGNAL_SCHEMA: &str = "signal/v1";

pub fn version_string() -> String {
    format!("mra-sr {}", env!("CARGO_PKG_VERSION"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalFile {
    pub values: Vec<f64>,
    pub bandlimit: Option<usize>,
    pub seed: Option<u64>,
}

impl SignalFile {
    pub fn from_signal(x: &Signal, seed: Option<u64>) -> Self {
        Self {
            values: x.values().to_vec(),
            bandlimit: x.bandlimit(),
            seed,
        }
    }

    pub fn to_signal(&self) -> Result<Signal, CliError> {
        Ok(match self.bandlimit {
            Some(b) => Signal::with_bandlimit(self.values.clone(), b)?,
            None => Signal::new(self.values.clone())?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamsRecord {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub sigma: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchFile {
    pub params: ParamsRecord,
    pub rows: Vec<Vec<f64>>,
    pub seed: u64,
    pub true_shifts: Option<Vec<usize>>,
}

impl BatchFile {
    pub fn from_batch(batch: &Batch) -> Self {
        let p = batch.params();
        Self {
            params: ParamsRecord {
                m: p.m,
                l: p.l,
                sigma: p.sigma,
                n: p.n,
                seed: p.seed,
            },
            rows: batch.rows().map(<[f64]>::to_vec).collect(),
            seed: p.seed,
            true_shifts: batch.true_shifts().map(<[usize]>::to_vec),
        }
    }

    pub fn to_batch(&self) -> Result<Batch, CliError> {
        let p = self.params;
        if p.n != self.rows.len() {
            return Err(CliError::Format(format!(
                "params say N = {} but {} rows are present",
                p.n,
                self.rows.len()
            )));
        }
        let params = ModelParams::new(p.m, p.l, p.sigma, p.n, p.seed)?;
        Ok(Batch::new(self.rows.clone(), params, self.true_shifts.clone())?)
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(format!("opening {}", path.display()), e))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

/// Serializes `rows` as CSV under a schema line.
pub fn csv_string<T: Serialize>(schema: &str, rows: &[T]) -> Result<String, CliError> {
    let mut out = format!("# schema: {schema}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| CliError::io("writing csv", e))?;
    }
    String::from_utf8(out).map_err(|e| CliError::Format(e.to_string()))
}

pub fn write_csv<T: Serialize>(path: &Path, schema: &str, rows: &[T]) -> Result<(), CliError> {
    write_text(path, &csv_string(schema, rows)?)
}

/// Reads a table written by [`write_csv`], checking its schema line.
pub fn read_csv<T: DeserializeOwned>(path: &Path, schema: &str) -> Result<Vec<T>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    parse_csv(&text, schema)
}

pub fn parse_csv<T: DeserializeOwned>(text: &str, schema: &str) -> Result<Vec<T>, CliError> {
    let first = text.lines().next().unwrap_or("");
    if first.trim() != format!("# schema: {schema}") {
        return Err(CliError::Format(format!("expected schema `{schema}`, found `{first}`")));
    }
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(CliError::from)).collect()
}

/// A single signal as a one-column CSV (`n,value`).
pub fn write_signal_csv(path: &Path, values: &[f64]) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct Row {
        n: usize,
        value: f64,
    }
    let rows: Vec<Row> = values.iter().enumerate().map(|(n, &value)| Row { n, value }).collect();
    write_csv(path, SIGNAL_SCHEMA, &rows)
}

#[derive(Debug, Serialize)]
struct Metadata<'a> {
    version: String,
    config: &'a crate::config::ExperimentConfig,
    seed: u64,
    wall_time_seconds: f64,
    slope: Option<f64>,
    marker: Option<f64>,
    summary: &'a [crate::experiments::SummaryRow],
}

/// Writes `results.csv`, `summary.csv`, `metadata.json` and, for
/// experiment 1, `per_frequency.csv` and `overlay.csv` into `dir`.
pub fn write_experiment(dir: &Path, out: &ExperimentOutput) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
    write_csv(&dir.join("results.csv"), RESULTS_SCHEMA, &out.rows)?;
    write_csv(&dir.join("summary.csv"), SUMMARY_SCHEMA, &out.summary)?;
    if out.config.experiment == 1 {
        write_csv(&dir.join("per_frequency.csv"), PER_FREQUENCY_SCHEMA, &out.per_frequency)?;
        write_csv(&dir.join("overlay.csv"), OVERLAY_SCHEMA, &out.overlay)?;
    }
    let mut f = File::create(dir.join("config.txt"))
        .map_err(|e| CliError::io("writing config echo", e))?;
    f.write_all(out.config.to_text().as_bytes())
        .map_err(|e| CliError::io("writing config echo", e))?;
    write_json(
        &dir.join("metadata.json"),
        &Metadata {
            version: version_string(),
            config: &out.config,
            seed: out.config.seed,
            wall_time_seconds: out.wall_time_seconds,
            slope: out.slope,
            marker: out.marker,
            summary: &out.summary,
        },
    )
}
