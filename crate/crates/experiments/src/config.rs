//! Experiment configuration and its flat `key = value` file format.
//!
//! One assignment per line; `#` starts a comment; keys are case-sensitive.
//! Lists are comma-separated. `snr` also accepts `logspace(a, b, n)`, the
//! `n` values `10^a .. 10^b` equally spaced in the exponent.
//!
//! | key | meaning |
//! |-----|---------|
//! | `experiment` | 1, 2 or 3 |
//! | `regime` | `high` or `low` (experiment 2 defaults) |
//! | `M` | signal length |
//! | `L` | samples per observation, or a list for experiment 3 |
//! | `B` | bandlimit (experiment 1) |
//! | `snr` | SNR value(s) |
//! | `N` | observations per trial |
//! | `trials` | trials per sweep point |
//! | `restarts` | EM restarts |
//! | `seed` | base seed |
//! | `scale_factor` | multiplies `N` and `trials` |
//! | `max_iter`, `tol` | EM stopping rule |
//! | `normalize` | rescale each signal to `‖x‖² = M` |
//! | `timing` | record wall-clock time (makes output non-reproducible) |

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    High,
    Low,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: u8,
    pub regime: Option<Regime>,
    pub m: usize,
    pub l: Vec<usize>,
    pub b: Option<usize>,
    pub snr: Vec<f64>,
    pub n: usize,
    pub trials: usize,
    pub restarts: usize,
    pub seed: u64,
    pub scale_factor: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub normalize: bool,
    pub timing: bool,
}

/// `10^a, …, 10^b` with `n` points equally spaced in the exponent.
pub fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![10f64.powf(a)],
        _ => (0..n)
            .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
            .collect(),
    }
}

pub fn divisors(m: usize) -> Vec<usize> {
    (1..=m).filter(|d| m % d == 0).collect()
}

impl ExperimentConfig {
    /// Desk-scale defaults for an experiment.
    pub fn defaults(experiment: u8, regime: Option<Regime>) -> Result<Self, CliError> {
        let base = Self {
            experiment,
            regime: None,
            m: 0,
            l: Vec::new(),
            b: None,
            snr: Vec::new(),
            n: 0,
            trials: 1,
            restarts: 1,
            seed: 0,
            scale_factor: 1.0,
            max_iter: 100,
            tol: 1e-5,
            normalize: true,
            timing: false,
        };
        Ok(match (experiment, regime) {
            (1, _) => Self {
                m: 120,
                l: vec![15],
                b: Some(15),
                snr: vec![1.0],
                n: 10_000,
                restarts: 5,
                ..base
            },
            (2, None | Some(Regime::High)) => Self {
                regime: Some(Regime::High),
                m: 64,
                l: vec![32],
                snr: logspace(0.2, 2.0, 8),
                n: 100,
                trials: 10,
                restarts: 100,
                ..base
            },
            (2, Some(Regime::Low)) => Self {
                regime: Some(Regime::Low),
                m: 32,
                l: vec![16],
                snr: logspace(-0.6, 0.0, 3),
                n: 20_000,
                trials: 5,
                restarts: 20,
                ..base
            },
            (3, _) => Self {
                m: 60,
                l: divisors(60).into_iter().filter(|&l| l >= 4).collect(),
                snr: vec![5.0],
                n: 1000,
                trials: 10,
                restarts: 50,
                ..base
            },
            _ => {
                return Err(CliError::Config(format!(
                    "unknown experiment {experiment}"
                )))
            }
        })
    }

    /// Parses the flat config format; unspecified keys take the defaults of
    /// the named experiment.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let pairs = parse_pairs(text)?;
        Self::from_pairs(&pairs)
    }

    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self, CliError> {
        let map: BTreeMap<&str, &str> = pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
        let experiment = map
            .get("experiment")
            .ok_or_else(|| CliError::Config("missing key `experiment`".into()))
            .and_then(|v| parse_num::<u8>("experiment", v))?;
        let regime = map.get("regime").map(|v| parse_regime(v)).transpose()?;
        let mut cfg = Self::defaults(experiment, regime)?;
        for (key, value) in pairs {
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Overrides a single key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "experiment" => self.experiment = parse_num(key, value)?,
            "regime" => self.regime = Some(parse_regime(value)?),
            "M" => self.m = parse_num(key, value)?,
            "L" => self.l = parse_list(key, value)?,
            "B" => self.b = Some(parse_num(key, value)?),
            "snr" => self.snr = parse_snr(value)?,
            "N" => self.n = parse_num(key, value)?,
            "trials" => self.trials = parse_num(key, value)?,
            "restarts" => self.restarts = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "scale_factor" => self.scale_factor = parse_num(key, value)?,
            "max_iter" => self.max_iter = parse_num(key, value)?,
            "tol" => self.tol = parse_num(key, value)?,
            "normalize" => self.normalize = parse_num(key, value)?,
            "timing" => self.timing = parse_num(key, value)?,
            _ => return Err(CliError::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: String| Err(CliError::Config(msg));
        if !(1..=3).contains(&self.experiment) {
            return fail(format!("unknown experiment {}", self.experiment));
        }
        if self.m == 0 || self.l.is_empty() || self.snr.is_empty() {
            return fail("M must be positive and the L and snr sweeps nonempty".into());
        }
        if let Some(&l) = self.l.iter().find(|&&l| l == 0 || self.m % l != 0) {
            return fail(format!("L = {l} does not divide M = {}", self.m));
        }
        if self.snr.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return fail("snr values must be positive".into());
        }
        if self.n == 0 || self.trials == 0 || self.restarts == 0 || self.max_iter == 0 {
            return fail("N, trials, restarts and max_iter must be positive".into());
        }
        if !(self.scale_factor.is_finite() && self.scale_factor > 0.0) || !(self.tol > 0.0) {
            return fail("scale_factor and tol must be positive".into());
        }
        if self.experiment == 1 {
            match self.b {
                Some(b) if 2 * b < self.m => {}
                _ => return fail(format!("experiment 1 needs a bandlimit B with 2B+1 <= M = {}", self.m)),
            }
        }
        Ok(())
    }

    /// Observation count after scaling.
    pub fn scaled_n(&self) -> usize {
        scale(self.n, self.scale_factor)
    }

    /// Trial count after scaling.
    pub fn scaled_trials(&self) -> usize {
        scale(self.trials, self.scale_factor)
    }

    /// Renders the config back into the file format.
    pub fn to_text(&self) -> String {
        let join = |v: &[String]| v.join(", ");
        let mut lines = vec![format!("experiment = {}", self.experiment)];
        if let Some(r) = self.regime {
            lines.push(format!("regime = {}", if r == Regime::High { "high" } else { "low" }));
        }
        lines.push(format!("M = {}", self.m));
        lines.push(format!("L = {}", join(&self.l.iter().map(usize::to_string).collect::<Vec<_>>())));
        if let Some(b) = self.b {
            lines.push(format!("B = {b}"));
        }
        lines.push(format!("snr = {}", join(&self.snr.iter().map(|s| format!("{s:?}")).collect::<Vec<_>>())));
        lines.push(format!("N = {}", self.n));
        lines.push(format!("trials = {}", self.trials));
        lines.push(format!("restarts = {}", self.restarts));
        lines.push(format!("seed = {}", self.seed));
        lines.push(format!("scale_factor = {:?}", self.scale_factor));
        lines.push(format!("max_iter = {}", self.max_iter));
        lines.push(format!("tol = {:?}", self.tol));
        lines.push(format!("normalize = {}", self.normalize));
        lines.push(format!("timing = {}", self.timing));
        lines.join("\n") + "\n"
    }
}

fn scale(v: usize, f: f64) -> usize {
    ((v as f64 * f).round() as usize).max(1)
}

/// Splits the file into `(key, value)` pairs in order.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", no + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(CliError::Config(format!("line {}: empty key or value", no + 1)));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

/// Parses a `key=value` command-line override.
pub fn parse_override(s: &str) -> Result<(String, String), CliError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{s}` is not key=value")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError> {
    value.split(',').map(|v| parse_num(key, v)).collect()
}

fn parse_regime(value: &str) -> Result<Regime, CliError> {
    match value.trim() {
        "high" => Ok(Regime::High),
        "low" => Ok(Regime::Low),
        other => Err(CliError::Config(format!("unknown regime `{other}`"))),
    }
}

fn parse_snr(value: &str) -> Result<Vec<f64>, CliError> {
    let v = value.trim();
    if let Some(args) = v.strip_prefix("logspace(").and_then(|r| r.strip_suffix(')')) {
        let parts: Vec<&str> = args.split(',').collect();
        if parts.len() != 3 {
            return Err(CliError::Config("logspace takes (a, b, n)".into()));
        }
        return Ok(logspace(
            parse_num("snr", parts[0])?,
            parse_num("snr", parts[1])?,
            parse_num("snr", parts[2])?,
        ));
    }
    parse_list("snr", v)
}
