//! Hyperparameter search: declarative spaces, grid and random search, asynchronous
//! successive halving, early stopping and a bounded worker pool.

mod asha;
pub mod seed;
mod space;
mod study;

pub use asha::{asha_decide, early_stop, validate_asha_log, AshaConfig, AshaDecision, AshaLogEntry, Direction};
pub use seed::{derive_seed, derived_rng};
pub use space::{expand_grid, sample_random, Domain, SearchSpace};
pub use study::{
    run_study, EarlyStopping, HistoryPoint, Objective, Scheduler, Search, StudyObserver, StudyResult, StudySpec, Trial,
    TrialStatus,
};

use std::path::PathBuf;

use crate::models::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum TuneError {
    #[error("invalid search space: {0}")]
    InvalidSpace(String),
    #[error("invalid scheduler: {0}")]
    InvalidScheduler(String),
    #[error("invalid study: {0}")]
    InvalidStudy(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("study `{name}` finished without a completed trial")]
    NoEligibleTrial { name: String, trials: Box<Vec<Trial>> },
    #[error("cannot write {0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
}
