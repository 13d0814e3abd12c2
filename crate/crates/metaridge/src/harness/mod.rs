//! Experiment configuration, the simulation driver and output formats.

pub mod archive;
pub mod config;
pub mod emit;
pub mod experiment;
pub mod seeds;

pub use archive::{format_tasks, parse_tasks, read_dataset, read_tasks, write_tasks};
pub use config::{EstimatorKind, ExperimentConfig, InitKind, LambdaRule, LimitMode, RiskMode, Sigma2Mode, Surrogate};
pub use emit::{diff_pct, emit, fmt_f64, render, to_csv, to_json, Format, SummaryRow, CSV_HEADER};
pub use experiment::{
    c_sweep, companion_spectrum, estimate_weight, risk_curve, run_experiment, run_records, run_records_with,
    spectrum_limiting_risk, surrogate_limiting_risk, thread_pool, CurveRow, Evaluation, ExperimentOutcome,
    LimitEvaluator, RunFailure, RunRecord, SweepRow,
};
