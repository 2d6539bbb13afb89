//! Interaction ingestion: delimited-file reading, ID remapping and dataset construction.

pub(crate) mod dataset;
mod reader;

pub use dataset::{
    build_dataset, compute_stats, Dataset, DatasetBuilder, DatasetStats, DedupPolicy, IdMap, Interaction,
};
pub use reader::{
    load_id_list, load_interactions, write_tsv, Column, LoadedInteractions, ParseMode, RawInteraction, Schema,
};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("malformed header in {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },
    #[error("{path}:{line}: {reason}")]
    Parse { path: PathBuf, line: usize, reason: String },
    #[error("no valid rows in {path} ({skipped} skipped)")]
    NoValidRows { path: PathBuf, skipped: usize },
    #[error("cannot build a dataset from zero records")]
    Empty,
    #[error("duplicate interaction ({user}, {item})")]
    Duplicate { user: String, item: String },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
}
