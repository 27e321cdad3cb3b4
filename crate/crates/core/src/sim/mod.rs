//! Simulation scenarios, scoring, replicated studies and hyperparameter
//! sweeps.

mod metrics;
mod scenario;
mod study;

pub use metrics::{score_estimation, score_selection, EstimationScore, SelectionScore};
pub use scenario::{generate, log_dirichlet, true_overall_indirect, GroundTruth, ScenarioSpec};
pub use study::{
    default_grid, run_replicate, run_study, sensitivity_sweep, HyperChange, ReplicateRow, ScoreReport,
    StudyConfig, SweepRow,
};
