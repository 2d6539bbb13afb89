//! Filtering and splitting.
//!
//! Every function here is pure: it takes an immutable [`Dataset`](crate::ingest::Dataset) and returns new
//! datasets that share the input's ID maps.

mod filter;
mod split;

pub use filter::{apply_filter, cold_filter, filter_by_rating, k_core, FilterSpec};
pub use split::{
    split, split_fixed_timestamp, split_holdout, split_kfold, split_leave_k_out, Fold, SplitMode, SplitOutput,
    SplitProvenance, SplitSpec, SplitStrategy,
};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PrepError {
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("{0} requires timestamps but the dataset has none")]
    MissingTimestamps(&'static str),
    #[error("cannot make {folds} folds from {interactions} interactions")]
    TooFewInteractions { folds: usize, interactions: usize },
}
