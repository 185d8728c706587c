//! Experiment orchestration: configuration, replicated runs, sweeps and
//! summaries.
//!
//! Cell seeds are `base_seed ^ mix64((grid << 32) | rep)`, with `mix64` the
//! SplitMix64 finalizer (see [`crate::rng`]).

pub mod config;
pub mod run;
pub mod summarize;
pub mod sweep;

pub use config::{DetectKnobs, ExperimentConfig, GridPoint, LrSource, RecoverKnobs, Task};
pub use run::{result_path, run_experiment, write_atomic, ResultRow, ResultTable, RunOptions};
pub use summarize::{summarize, summary_to_csv, SummaryRecord};
pub use sweep::{sweep_phase_diagram, sweep_to_csv, Fixed, SweepRow, SweepSpec};
