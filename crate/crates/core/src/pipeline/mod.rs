//! End-to-end experiment machinery: CSV ingestion, synthetic domain pairs,
//! kNN scoring and the repeated-trial runner.

pub mod csv_io;
pub mod experiment;
pub mod knn;
pub mod synth;

pub use csv_io::{load_csv, write_csv};
pub use experiment::{run_experiment, run_trial, split_source, ExperimentReport, Timings, TrialOutput, TrialResult};
pub use knn::knn_predict;
pub use synth::{generate_synthetic, SyntheticKind};
