//! Harnesses for the three numerical experiments: recovery of a bandlimited
//! signal, error against SNR, and error against the number of samples `L`.

use std::time::Instant;

use mra_core::em::{run_em, EmConfig};
use mra_core::metrics::{align, log_log_slope, median, per_frequency_error};
use mra_core::rng::{derive_seed, stream_rng};
use mra_core::signal::low_pass;
use mra_core::{generate_batch, sample_bandlimited_signal, ModelParams, Prior, Signal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::CliError;

/// Out-of-band prior variance in experiment 1, relative to the in-band level.
pub const EXP1_PRIOR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment_id: u8,
    pub trial: usize,
    pub snr: f64,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub relative_error: f64,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub experiment_id: u8,
    pub snr: f64,
    #[serde(rename = "L")]
    pub l: usize,
    pub trials: usize,
    pub median_error: f64,
    pub mean_error: f64,
}

/// Relative error of the EM estimate and of the low-passed truth at one
/// frequency; empty where the truth coefficient vanishes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyRow {
    pub trial: usize,
    pub k: usize,
    pub em_error: Option<f64>,
    pub baseline_error: Option<f64>,
}

/// Truth, low-passed baseline and aligned estimate on the `M`-grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayRow {
    pub trial: usize,
    pub n: usize,
    pub truth: f64,
    pub baseline: f64,
    pub estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
    /// Least-squares slope of log10(median error) against log10(SNR).
    pub slope: Option<f64>,
    /// `M^{2/3}`, the conjectured computational limit on `L`.
    pub marker: Option<f64>,
    pub per_frequency: Vec<FrequencyRow>,
    pub overlay: Vec<OverlayRow>,
    pub wall_time_seconds: f64,
}

struct Trial {
    snr: f64,
    l: usize,
    trial: usize,
    point: usize,
}

struct TrialResult {
    row: ResultRow,
    per_frequency: Vec<FrequencyRow>,
    overlay: Vec<OverlayRow>,
}

fn em_config(cfg: &ExperimentConfig, seed: u64) -> EmConfig<f64> {
    EmConfig {
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        restarts: cfg.restarts,
        bandlimit: if cfg.experiment == 1 { cfg.b } else { None },
        seed,
    }
}

fn run_trial(cfg: &ExperimentConfig, t: &Trial) -> Result<TrialResult, CliError> {
    let start = Instant::now();
    let tags = [cfg.experiment as u64, t.point as u64, t.trial as u64];
    let seed = |role: u64| derive_seed(cfg.seed, &[tags[0], tags[1], tags[2], role]);
    let m = cfg.m;
    let n = cfg.scaled_n();
    let mut rng = stream_rng(seed(0), 0);
    let (x, prior): (Signal, Prior) = if cfg.experiment == 1 {
        let b = cfg.b.expect("validated");
        (
            sample_bandlimited_signal(m, b, cfg.normalize, &mut rng)?,
            Prior::flat_band(m, b, EXP1_PRIOR_FLOOR)?,
        )
    } else {
        let prior = Prior::one_over_f(m)?;
        let x = prior.sample(&mut rng)?;
        (if cfg.normalize { x.normalized() } else { x }, prior)
    };
    let params = ModelParams::new(m, t.l, x.sigma_for_snr(t.snr), n, seed(1))?;
    let batch = generate_batch(&x, &params)?;
    let result = run_em(&batch, &prior, &em_config(cfg, seed(2)))?;
    let alignment = align(&result.estimate, &x)?;

    let (mut per_frequency, mut overlay) = (Vec::new(), Vec::new());
    if cfg.experiment == 1 {
        let baseline = Signal::new(low_pass(x.values(), t.l / 2))?;
        let em_err = per_frequency_error(&result.estimate, &x)?;
        let base_err = per_frequency_error(&baseline, &x)?;
        per_frequency = em_err
            .iter()
            .zip(&base_err)
            .enumerate()
            .map(|(k, (&e, &b))| FrequencyRow {
                trial: t.trial,
                k,
                em_error: e,
                baseline_error: b,
            })
            .collect();
        let aligned = result.estimate.shifted(alignment.shift as i64);
        overlay = (0..m)
            .map(|i| OverlayRow {
                trial: t.trial,
                n: i,
                truth: x.values()[i],
                baseline: baseline.values()[i],
                estimate: aligned.values()[i],
            })
            .collect();
    }
    Ok(TrialResult {
        row: ResultRow {
            experiment_id: cfg.experiment,
            trial: t.trial,
            snr: t.snr,
            m,
            l: t.l,
            n,
            relative_error: alignment.relative_error,
            iterations: result.iterations,
            converged: result.converged,
            wall_time_seconds: if cfg.timing { start.elapsed().as_secs_f64() } else { 0.0 },
        },
        per_frequency,
        overlay,
    })
}

/// Runs the configured experiment. Trials run in parallel; output rows are
/// sorted by `(snr, L, trial)`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput, CliError> {
    cfg.validate()?;
    let start = Instant::now();
    let mut points: Vec<(f64, usize)> = match cfg.experiment {
        3 => cfg.l.iter().map(|&l| (cfg.snr[0], l)).collect(),
        _ => cfg.snr.iter().map(|&s| (s, cfg.l[0])).collect(),
    };
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let trials: Vec<Trial> = points
        .iter()
        .enumerate()
        .flat_map(|(point, &(snr, l))| {
            (0..cfg.scaled_trials()).map(move |trial| Trial { snr, l, trial, point })
        })
        .collect();
    let results = trials
        .par_iter()
        .map(|t| run_trial(cfg, t))
        .collect::<Result<Vec<_>, _>>()?;

    let mut rows = Vec::with_capacity(results.len());
    let mut per_frequency = Vec::new();
    let mut overlay = Vec::new();
    for r in results {
        rows.push(r.row);
        per_frequency.extend(r.per_frequency);
        overlay.extend(r.overlay);
    }
    let summary = summarize(&rows);
    let slope = (cfg.experiment == 2)
        .then(|| {
            let snrs: Vec<f64> = summary.iter().map(|s| s.snr).collect();
            let meds: Vec<f64> = summary.iter().map(|s| s.median_error).collect();
            log_log_slope(&snrs, &meds)
        })
        .flatten();
    Ok(ExperimentOutput {
        config: cfg.clone(),
        rows,
        summary,
        slope,
        marker: (cfg.experiment == 3).then(|| (cfg.m as f64).powf(2.0 / 3.0)),
        per_frequency,
        overlay,
        wall_time_seconds: if cfg.timing { start.elapsed().as_secs_f64() } else { 0.0 },
    })
}

pub fn run_experiment_1(cfg: &ExperimentConfig) -> Result<ExperimentOutput, CliError> {
    expect_id(cfg, 1)?;
    run_experiment(cfg)
}

pub fn run_experiment_2(cfg: &ExperimentConfig) -> Result<ExperimentOutput, CliError> {
    expect_id(cfg, 2)?;
    run_experiment(cfg)
}

pub fn run_experiment_3(cfg: &ExperimentConfig) -> Result<ExperimentOutput, CliError> {
    expect_id(cfg, 3)?;
    run_experiment(cfg)
}

fn expect_id(cfg: &ExperimentConfig, id: u8) -> Result<(), CliError> {
    if cfg.experiment != id {
        return Err(CliError::Config(format!(
            "config is for experiment {}, not {id}",
            cfg.experiment
        )));
    }
    Ok(())
}

/// Median and mean error per `(snr, L)` point, in row order.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut out: Vec<SummaryRow> = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let (snr, l) = (rows[start].snr, rows[start].l);
        let end = start
            + rows[start..]
                .iter()
                .take_while(|r| r.snr == snr && r.l == l)
                .count();
        let errs: Vec<f64> = rows[start..end].iter().map(|r| r.relative_error).collect();
        out.push(SummaryRow {
            experiment_id: rows[start].experiment_id,
            snr,
            l,
            trials: errs.len(),
            median_error: median(&errs).expect("nonempty group"),
            mean_error: errs.iter().sum::<f64>() / errs.len() as f64,
        });
        start = end;
    }
    out
}
