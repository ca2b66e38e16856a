//! Experiment orchestration: configuration, seeding, train and assessment
//! loops, and metric files.

pub mod config;
pub mod metrics;
pub mod run;

pub use config::{BatteryConfig, NetworkConfig, NetworkPreset, RunConfig, RunPreset};
pub use metrics::{emit_metrics, phase_means, read_metrics_csv, summarize, MetricsRecord, Phase, PhaseMeans};
pub use run::{
    build_environment, evaluate, run_baseline, run_episode, train, train_to_dir, Controller, EvalPolicy, PolicyKind,
};
