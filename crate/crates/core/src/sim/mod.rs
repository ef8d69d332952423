//! Deterministic test bed: differential-drive plant with motor lag, latency
//! legs, staged scenarios with a scripted expert, and episode metrics.

pub mod compare;
pub mod demo;
pub mod episode;
pub mod latency;
pub mod plant;
pub mod policy;
pub mod scenario;

use thiserror::Error;

pub use compare::{
    compare_conditions, compare_conditions_with, rows_from_csv, rows_to_csv, Comparison, Condition, ConditionSummary,
    EpisodeRow,
};
pub use demo::{scripted_expert, DemoOptions, ExpertDemo};
pub use episode::{run_episode, Episode, EpisodeConfig, EpisodeMetrics, ScenarioMonitor, SLIP_ACCEL};
pub use latency::{displacement_during, inject_latency, DelayedEvent};
pub use plant::{step_plant, PlantConfig, PlantState, SimPlant};
pub use policy::{ExpertConfig, LabelFrame, StagePolicy};
pub use scenario::{ScenarioId, SimScenario, Stage};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scenario {scenario}: expert did not finish stage {stage} within the time limit")]
    Unreachable { scenario: String, stage: usize },
    #[error(transparent)]
    Executor(#[from] crate::executor::ExecutorError),
    #[error(transparent)]
    Anchor(#[from] crate::anchoring::AnchorError),
    #[error(transparent)]
    Pipeline(#[from] crate::pipeline::PipelineError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Io(String),
}
