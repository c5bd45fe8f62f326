//! Experiment harness and file formats for the `mra-sr` command-line tool.

pub mod config;
pub mod error;
pub mod experiments;
pub mod io;

pub use config::{ExperimentConfig, Regime};
pub use error::CliError;
pub use experiments::{
    run_experiment, run_experiment_1, run_experiment_2, run_experiment_3, ExperimentOutput,
    FrequencyRow, ResultRow, SummaryRow,
};
