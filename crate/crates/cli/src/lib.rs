//! Experiment harness: configuration files, orchestration of treatment and
//! replicate cells, CSV logs, summary statistics and DOT export.

pub mod config;
pub mod dot;
pub mod experiment;
pub mod report;

pub use config::{ExperimentConfig, TaskSource, TreatmentSpec};
pub use dot::genome_to_dot;
pub use experiment::{run_experiment, Cell, CellResult, ExperimentOutput, CSV_HEADER};
pub use report::{compute_stats, read_rows, Metric, StatsReport};

/// Environment variable holding the worker-thread count.
pub const THREADS_ENV: &str = "STRUCTEVO_THREADS";
