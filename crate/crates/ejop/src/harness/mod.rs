//! Experiment harness: dataset ingestion, split management, tuning,
//! experiment orchestration, and report emission.

pub mod config;
pub mod experiment;
pub mod io;
pub mod splits;
pub mod tune;

pub use config::{ClassifierKind, DatasetFormat, ExperimentConfig, MetricKind, RecoverConfig};
pub use experiment::{emit_report, run_experiment, ExperimentReport, ReportRow};
pub use io::load_dataset;
pub use splits::{make_splits, SplitSize, SplitSpec, Splits};
pub use tune::{tune, TuneChoice, TuneGrids, TuneTrace};
