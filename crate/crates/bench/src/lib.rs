//! Experiment plumbing around the `rivmpl` solver: configuration, instance
//! construction, clustering and sparsity metrics, trace and summary output.

pub mod config;
pub mod experiment;
pub mod metrics;

pub use config::{ConfigError, DataSource, ExperimentConfig, ProblemKind};
pub use experiment::{run_experiment, ExperimentError, MetricsRecord, Summary};
