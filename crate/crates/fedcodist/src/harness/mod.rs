//! Experiment harness: config files, end-to-end runs, metrics persistence,
//! and parameter sweeps.

pub mod config;
pub mod experiment;
pub mod metrics;
pub mod sweep;

pub use config::{
    load_config, parse_config_str, parse_config_value, DistillSetConfig, ExperimentConfig, Method,
};
pub use experiment::{build_experiment_data, evaluate, run_experiment};
pub use metrics::{
    metrics_to_csv, parse_metrics_str, write_metrics, MetricsRecord, SplitKind, METRICS_HEADER,
};
pub use sweep::{
    patch_config_value, patched_config, summary_to_csv, sweep, SweepCell, SweepRun, SUMMARY_HEADER,
};
