//! # warpbench
//!
//! A single-node recommender-system experimentation engine. One crate covers the
//! whole lifecycle of an offline recommendation experiment:
//!
//! - [`ingest`]: delimited-file loading, ID remapping, deduplication, dataset statistics
//! - [`prep`]: rating-threshold, k-core and cold-entity filters; holdout, leave-k-out,
//!   fixed-timestamp and k-fold splits, all seed-anchored
//! - [`models`]: MostPop, Random, ItemKNN, UserKNN, EASE^R and BPR-MF behind one
//!   [`models::TrainedModel`] contract, plus a binary checkpoint container
//! - [`tune`]: grid and random search, asynchronous successive halving, early stopping
//!   and a bounded worker pool
//! - [`eval`]: top-K accuracy, coverage, novelty and popularity-bias metrics, paired and
//!   independent significance tests with Bonferroni and Benjamini-Hochberg corrections
//! - [`report`]: run manifests with SHA-256 digests, recommendation TSVs and a
//!   power-model energy/carbon estimate
//! - [`serve`]: a REST API and a newline-delimited JSON-RPC (MCP) tool server over the
//!   same inference core
//! - [`pipeline`]: declarative TOML experiment configs and the train / design / eval
//!   pipelines with stage hooks
//!
//! The `warpbench` binary is a thin wrapper over [`pipeline`] and [`serve`]; the
//! `examples/` directory of this crate shows each capability in isolation.
//!
//! ```
//! use warpbench::ingest::{build_dataset, compute_stats, DedupPolicy, RawInteraction};
//!
//! let records = vec![
//!     RawInteraction::implicit("u1", "i1"),
//!     RawInteraction::implicit("u1", "i2"),
//!     RawInteraction::implicit("u2", "i1"),
//! ];
//! let dataset = build_dataset(records, DedupPolicy::KeepFirst).unwrap();
//! let stats = compute_stats(&dataset);
//! assert_eq!(stats.n_users, 2);
//! assert!((stats.sparsity - 0.25).abs() < 1e-12);
//! ```

pub mod eval;
pub mod ingest;
pub mod models;
pub mod pipeline;
pub mod prep;
pub mod report;
pub mod serve;
pub mod sparse;
pub mod tune;

pub use tune::seed::derive_seed;

/// Version string written into manifests and checkpoints.
pub const ENGINE_VERSION: &str = concat!("warpbench/", env!("CARGO_PKG_VERSION"));
