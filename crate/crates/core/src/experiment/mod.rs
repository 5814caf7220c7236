//! Configuration, multi-seed runs, metrics files and plots.

pub mod config;
pub mod metrics;
pub mod plot;
pub mod runner;

pub use config::{AgentKind, ExperimentConfig, ScenarioSource, ScheduleKind, Threshold};
pub use metrics::EpisodeMetrics;
pub use plot::{emit_plots, Baseline, RewardColumn, SeriesInput};
pub use runner::{evaluate_checkpoint, run_agent, run_experiment, run_oracle, sweep_thresholds, RunReport, SeedRun, SweepPair};
