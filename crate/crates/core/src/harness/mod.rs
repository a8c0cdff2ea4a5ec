//! Experiment orchestration behind the command-line tool.

pub mod commands;
pub mod config;
pub mod records;
mod run;
pub mod svg;

pub use commands::{cmd_adapt, cmd_eval, cmd_sweep, cmd_train, AdaptReport, SweepReport, TrainCell, TrainReport};
pub use config::{ExperimentConfig, ExperimentSpec, Overrides};
pub use records::{EvalRecord, InstabilityRecord, SweepRecord, SweepSummary};
pub use run::{episode_seed, episode_tallies, evaluate, train, EpisodeRecord, EvalSummary, SeedStream, TrainingFailure};
