//! Experiment drivers: configuration, benchmarks, single runs and validation.

pub mod bench;
pub mod config;
pub mod single;
pub mod validate;

pub use bench::{run_benchmark, sample_starts, write_outputs, RunOutcome};
pub use config::{ExperimentConfig, Scale};
pub use single::single_run;
pub use validate::{gradient_fd_check, validate, Fault, ValidationReport};
