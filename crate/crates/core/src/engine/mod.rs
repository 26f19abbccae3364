//! Run orchestration: recursive training loops, onset detection,
//! multi-seed sweeps and fixed-budget recovery.

mod classify;
mod onset;
mod recovery;
mod run;
mod stats;
mod sweep;

pub use classify::run_recursive_classifier;
pub use onset::{detect_hidden_onset, detect_visible_onset, OnsetReport};
pub use recovery::{recovery_grid, recover, RecoveryBudget, RecoveryResult, RecoverySpec, DEFAULT_CHECKPOINT_GENS};
pub use run::{run_recursive, RunResult, RunSpec, RunState, TrajectoryRecord, GenParams, LearnerParams};
pub use stats::{iqr, mean, median, quartiles, sample_std};
pub use sweep::{lead_time_study, summarize_runs, sweep, LeadTimeReport, ModeAggregate, RunSummary, SweepReport};
