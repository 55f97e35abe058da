//! Configuration-driven experiment runner: every run is reproducible from
//! its record header alone.

pub mod config;
pub mod error;
pub mod record;
pub mod report;
pub mod runner;
pub mod suites;

pub use config::{ExperimentConfig, RunParams, Value};
pub use error::{HarnessError, Result};
pub use record::{RunRecord, Series};
pub use runner::{run_experiment, run_one};
