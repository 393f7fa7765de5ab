//! Experiment configuration, Monte-Carlo runners and CSV/text reports.

pub mod config;
pub mod experiments;
pub mod report;

pub use config::{parse_config, parse_config_str, DeltaSpec, ExperimentConfig, GraphSpec, PlantSpec, RunMode};
pub use experiments::{
    run_bounds_report, run_min_pbeta_sweep, run_mse_experiment, run_pushsum_report, BoundsRow, MseRow, MseTable,
    PushSumRow, Setup, SweepRow,
};
