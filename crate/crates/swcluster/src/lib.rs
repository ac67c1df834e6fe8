//! Experiment harness for the sliding-window clustering structures: stream
//! generators, oracle-checked runs and the verification suites behind the CLI.

pub mod config;
pub mod experiment;
pub mod generate;
pub mod verify;

pub use config::{ExperimentConfig, Generator, Pipeline};
pub use experiment::{run_experiment, Report};
pub use verify::{run_verify, Suite, VerifyReport};
