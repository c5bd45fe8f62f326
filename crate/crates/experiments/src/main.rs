use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mra_core::em::{run_em, EmConfig};
use mra_core::invariants::{debias, empirical_invariants};
use mra_core::moments::{jacobian_rank_test, DEFAULT_RANK_TOL, DEFAULT_RANK_TRIALS};
use mra_core::orbit::{identifiability_bound, max_identifiable_k, orbit_select_map, DEFAULT_ORBIT_BUDGET};
use mra_core::rng::stream_rng;
use mra_core::{generate_batch, sample_bandlimited_signal, ModelParams, Prior, Signal};
use mra_experiments::config::{parse_override, parse_pairs, ExperimentConfig};
use mra_experiments::io::{self, BatchFile, SignalFile};
use mra_experiments::{run_experiment, CliError};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "mra-sr", version, about = "Super-resolution multi-reference alignment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Base seed for every random draw.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file (or directory for `experiment`); stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PriorKind {
    White,
    OneOverF,
    FlatBand,
}

#[derive(Args)]
struct PriorArgs {
    /// Prior spec as JSON (`{"circulant": {...}}` or `{"dense": {...}}`).
    #[arg(long)]
    prior_file: Option<PathBuf>,
    /// Built-in prior, used when no prior file is given.
    #[arg(long, value_enum, default_value = "one-over-f")]
    prior: PriorKind,
    /// Band for the flat-band prior.
    #[arg(long)]
    prior_band: Option<usize>,
}

impl PriorArgs {
    fn build(&self, m: usize) -> Result<Prior, CliError> {
        if let Some(path) = &self.prior_file {
            let prior: Prior = io::read_json(path)?;
            prior.validate()?;
            return Ok(prior);
        }
        Ok(match self.prior {
            PriorKind::White => Prior::white(m, 1.0)?,
            PriorKind::OneOverF => Prior::one_over_f(m)?,
            PriorKind::FlatBand => {
                let b = self
                    .prior_band
                    .ok_or_else(|| CliError::Config("--prior flat-band needs --prior-band".into()))?;
                Prior::flat_band(m, b, 1e-6)?
            }
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Draw a signal and a batch of observations.
    Generate {
        #[arg(long = "M")]
        m: usize,
        #[arg(long = "L")]
        l: usize,
        #[arg(long = "N")]
        n: usize,
        /// Noise standard deviation (overrides --snr).
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        snr: f64,
        /// Draw a bandlimited signal instead of a prior sample.
        #[arg(long)]
        bandlimit: Option<usize>,
        /// Signal file to use instead of drawing one.
        #[arg(long)]
        signal: Option<PathBuf>,
        /// Also write the signal here.
        #[arg(long)]
        signal_output: Option<PathBuf>,
        /// Keep the raw scale of the drawn signal.
        #[arg(long)]
        no_normalize: bool,
        #[command(flatten)]
        prior: PriorArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Empirical invariants of a batch.
    Invariants {
        #[arg(long)]
        input: PathBuf,
        /// Subtract the noise bias using the batch's sigma.
        #[arg(long)]
        debias: bool,
        #[command(flatten)]
        common: Common,
    },
    /// EM estimate of the signal from a batch.
    Estimate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
        #[arg(long, default_value_t = 100)]
        max_iter: usize,
        #[arg(long, default_value_t = 5)]
        restarts: usize,
        #[arg(long)]
        bandlimit: Option<usize>,
        /// Also write the estimate as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        prior: PriorArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Prior-optimal member of a signal's orbit.
    Orbit {
        /// Signal JSON file.
        #[arg(long)]
        signal: PathBuf,
        #[arg(long = "L")]
        l: usize,
        #[arg(long, default_value_t = DEFAULT_ORBIT_BUDGET)]
        budget: u128,
        #[command(flatten)]
        prior: PriorArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Jacobian rank test of the moment map.
    Identifiability {
        #[arg(long = "L")]
        l: usize,
        /// One value or a comma-separated list.
        #[arg(long = "K", value_delimiter = ',', required = true)]
        k: Vec<usize>,
        #[arg(long, default_value_t = DEFAULT_RANK_TRIALS)]
        trials: usize,
        #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
        tol: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Run experiment 1, 2 or 3 and write its tables.
    Experiment {
        /// Flat `key = value` config file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// `key=value` overrides applied after the file.
        #[arg(long = "set")]
        set: Vec<String>,
        #[command(flatten)]
        common: Common,
    },
}

fn emit<T: Serialize>(output: Option<&Path>, value: &T) -> Result<(), CliError> {
    match output {
        Some(path) => io::write_json(path, value),
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct IdentifiabilityRow {
    #[serde(rename = "L")]
    l: usize,
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "P_of_L")]
    p_of_l: f64,
    #[serde(rename = "P_of_L_exact")]
    p_of_l_exact: String,
    max_k: u64,
    rank: usize,
    identifiable: bool,
}

#[derive(Serialize)]
struct OrbitReport {
    orbit_size: u128,
    min_value: f64,
    unique: bool,
    perm: Vec<usize>,
    shifts: Vec<usize>,
    best: Vec<f64>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate {
            m,
            l,
            n,
            sigma,
            snr,
            bandlimit,
            signal,
            signal_output,
            no_normalize,
            prior,
            common,
        } => {
            let x = match signal {
                Some(path) => io::read_json::<SignalFile>(&path)?.to_signal()?,
                None => {
                    let mut rng = stream_rng(common.seed, u64::MAX);
                    match bandlimit {
                        Some(b) => sample_bandlimited_signal(m, b, !no_normalize, &mut rng)?,
                        None => {
                            let x = prior.build(m)?.sample(&mut rng)?;
                            if no_normalize { x } else { x.normalized() }
                        }
                    }
                }
            };
            if x.len() != m {
                return Err(CliError::Config(format!("signal has length {}, not M = {m}", x.len())));
            }
            if !(snr > 0.0) {
                return Err(CliError::Config("--snr must be positive".into()));
            }
            let sigma = sigma.unwrap_or_else(|| x.sigma_for_snr(snr));
            let batch = generate_batch(&x, &ModelParams::new(m, l, sigma, n, common.seed)?)?;
            if let Some(path) = signal_output {
                io::write_json(&path, &SignalFile::from_signal(&x, Some(common.seed)))?;
            }
            emit(common.output.as_deref(), &BatchFile::from_batch(&batch))
        }
        Command::Invariants { input, debias: unbias, common } => {
            let batch = io::read_json::<BatchFile>(&input)?.to_batch()?;
            let mut triple = empirical_invariants(&batch)?;
            if unbias {
                triple = debias(&triple, batch.sigma(), batch.params().l)?;
            }
            emit(common.output.as_deref(), &triple)
        }
        Command::Estimate {
            input,
            tol,
            max_iter,
            restarts,
            bandlimit,
            csv,
            prior,
            common,
        } => {
            let batch = io::read_json::<BatchFile>(&input)?.to_batch()?;
            let prior = prior.build(batch.params().m)?;
            let config = EmConfig {
                tol,
                max_iter,
                restarts,
                bandlimit,
                seed: common.seed,
            };
            let result = run_em(&batch, &prior, &config)?;
            if let Some(path) = csv {
                io::write_signal_csv(&path, result.estimate.values())?;
            }
            emit(common.output.as_deref(), &result)
        }
        Command::Orbit {
            signal,
            l,
            budget,
            prior,
            common,
        } => {
            let x: Signal = io::read_json::<SignalFile>(&signal)?.to_signal()?;
            let prior = prior.build(x.len())?;
            let sel = orbit_select_map(&x, l, &prior, budget)?;
            emit(
                common.output.as_deref(),
                &OrbitReport {
                    orbit_size: sel.orbit_size,
                    min_value: sel.value,
                    unique: sel.unique,
                    perm: sel.element.perm().to_vec(),
                    shifts: sel.element.shifts().to_vec(),
                    best: sel.best.values().to_vec(),
                },
            )
        }
        Command::Identifiability {
            l,
            k,
            trials,
            tol,
            common,
        } => {
            let mut rng = stream_rng(common.seed, 0);
            let bound = identifiability_bound(l as u64);
            let rows = k
                .iter()
                .map(|&k| {
                    let r = jacobian_rank_test(l, k, trials, tol, &mut rng)?;
                    Ok(IdentifiabilityRow {
                        l,
                        k,
                        p_of_l: *bound.numer() as f64 / *bound.denom() as f64,
                        p_of_l_exact: bound.to_string(),
                        max_k: max_identifiable_k(l as u64),
                        rank: r.rank,
                        identifiable: r.identifiable,
                    })
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            match common.output.as_deref() {
                Some(path) if path.extension().is_some_and(|e| e == "csv") => {
                    io::write_csv(path, io::IDENTIFIABILITY_SCHEMA, &rows)
                }
                out if rows.len() == 1 => emit(out, &rows[0]),
                out => emit(out, &rows),
            }
        }
        Command::Experiment { config, set, common } => {
            let mut pairs = match &config {
                Some(path) => parse_pairs(
                    &std::fs::read_to_string(path)
                        .map_err(|e| CliError::io(format!("reading {}", path.display()), e))?,
                )?,
                None => Vec::new(),
            };
            pairs.push(("seed".into(), common.seed.to_string()));
            for s in &set {
                pairs.push(parse_override(s)?);
            }
            let cfg = ExperimentConfig::from_pairs(&pairs)?;
            let out = run_experiment(&cfg)?;
            let dir = common
                .output
                .ok_or_else(|| CliError::Config("experiment needs --output <dir>".into()))?;
            io::write_experiment(&dir, &out)?;
            eprintln!(
                "wrote {} rows to {}{}",
                out.rows.len(),
                dir.display(),
                out.slope.map(|s| format!(" (slope {s:.3})")).unwrap_or_default()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
