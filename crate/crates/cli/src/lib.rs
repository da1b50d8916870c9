//! Experiment harness behind the `ncdmp` binary: chain files, parameter
//! sweeps with CSV output, and text reports.

pub mod chain_io;
pub mod error;
pub mod experiment;
pub mod report;

pub use error::{CliError, Result};
pub use experiment::{run_experiment, BlocksSource, ExperimentConfig, ExperimentResults, SweepVariable};
