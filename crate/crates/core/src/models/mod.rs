//! The six recommenders behind one fit/score contract.
//!
//! | family    | fitted state                         | scores a raw item sequence |
//! |-----------|--------------------------------------|----------------------------|
//! | `mostpop` | item interaction counts              | yes                        |
//! | `random`  | a seed                               | no                         |
//! | `itemknn` | pruned item-item neighbour lists     | yes                        |
//! | `userknn` | pruned user-user neighbour lists     | no                         |
//! | `ease`    | dense item-item weights, zero diagonal | yes                      |
//! | `bprmf`   | user/item factors and item biases    | no                         |
//!
//! Rankings everywhere break score ties by ascending internal item index.

mod bpr;
mod checkpoint;
mod config;
mod ease;
mod knn;
pub(crate) mod linalg;
mod popularity;
mod rank;
mod trainer;

pub use bpr::{bpr_triple_gradient, fit_bprmf, BprGradient, BprTrainer};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{
    BprParams, EaseParams, Family, KnnParams, ModelConfig, ParamMap, ParamValue, Similarity, DEFAULT_EASE_MAX_ITEMS,
};
pub use ease::fit_ease;
pub use knn::{fit_itemknn, fit_userknn, NeighborLists};
pub use popularity::{fit_mostpop, fit_random};
pub use rank::{top_k, ItemScore};
pub use trainer::{fit, Deadline, ModelTrainer};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::Dataset;
use crate::sparse::Csr;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("EASE needs a dense {items}x{items} matrix, above the cap of {cap} items")]
    DenseCapExceeded { items: usize, cap: usize },
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("training diverged in epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },
    #[error("time limit exceeded")]
    TimeLimitExceeded,
    #[error("cutoff K must be at least 1")]
    InvalidCutoff,
    #[error("user index {0} out of range")]
    UnknownUser(u32),
    #[error("{family} cannot {operation}")]
    Unsupported { family: Family, operation: &'static str },
    #[error("none of the {0} input items are known")]
    NoKnownItems(usize),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint was built for id maps {found}, expected {expected}")]
    IdMapMismatch { expected: String, found: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Family-specific fitted parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelState {
    MostPop {
        popularity: Vec<f64>,
    },
    Random {
        seed: u64,
    },
    ItemKnn {
        neighbors: NeighborLists,
        /// Row `j` lists `(i, sim(i, j))` for every item `i` whose list contains `j`.
        reverse: Csr,
    },
    UserKnn {
        neighbors: NeighborLists,
    },
    Ease {
        /// Row-major `n_items x n_items`, `weights[j * n + i] = B[j, i]`.
        weights: Vec<f64>,
    },
    BprMf {
        factors: usize,
        user_factors: Vec<f64>,
        item_factors: Vec<f64>,
        item_bias: Vec<f64>,
    },
}

/// A fitted model together with the training data it was fitted on.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    config: ModelConfig,
    state: ModelState,
    train: Dataset,
}

impl TrainedModel {
    pub(crate) fn new(config: ModelConfig, state: ModelState, train: &Dataset) -> Self {
        Self {
            config,
            state,
            train: train.clone(),
        }
    }

    pub fn family(&self) -> Family {
        self.config.family()
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn state(&self) -> &ModelState {
        &self.state
    }

    /// The training dataset; its rows are the seen-item sets.
    pub fn train(&self) -> &Dataset {
        &self.train
    }

    pub fn n_items(&self) -> usize {
        self.train.n_items()
    }

    pub fn n_users(&self) -> usize {
        self.train.n_users()
    }

    /// Writes the score of every item for `user` into `out`.
    pub fn score_user(&self, user: u32, out: &mut [f64]) -> Result<(), ModelError> {
        let u = user as usize;
        if u >= self.n_users() {
            return Err(ModelError::UnknownUser(user));
        }
        let n = self.n_items();
        assert_eq!(out.len(), n);
        let x = self.train.matrix();
        match &self.state {
            ModelState::MostPop { popularity } => out.copy_from_slice(popularity),
            ModelState::Random { seed } => popularity::random_scores(*seed, user, out),
            ModelState::ItemKnn { reverse, .. } => {
                out.fill(0.0);
                for (&j, &r) in x.row_indices(u).iter().zip(x.row_values(u)) {
                    let j = j as usize;
                    for (&i, &s) in reverse.row_indices(j).iter().zip(reverse.row_values(j)) {
                        out[i as usize] += s * r;
                    }
                }
            }
            ModelState::UserKnn { neighbors } => {
                out.fill(0.0);
                for (v, s) in neighbors.list(u) {
                    let v = v as usize;
                    for (&i, &r) in x.row_indices(v).iter().zip(x.row_values(v)) {
                        out[i as usize] += s * r;
                    }
                }
            }
            ModelState::Ease { weights } => {
                out.fill(0.0);
                for (&j, &r) in x.row_indices(u).iter().zip(x.row_values(u)) {
                    let row = &weights[j as usize * n..(j as usize + 1) * n];
                    out.iter_mut().zip(row).for_each(|(o, &w)| *o += r * w);
                }
            }
            ModelState::BprMf {
                factors,
                user_factors,
                item_factors,
                item_bias,
            } => {
                let f = *factors;
                let pu = &user_factors[u * f..(u + 1) * f];
                for (i, o) in out.iter_mut().enumerate() {
                    let qi = &item_factors[i * f..(i + 1) * f];
                    *o = linalg::dot(pu, qi) + item_bias[i];
                }
            }
        }
        Ok(())
    }

    /// Profile-free scores for a sequence of internal item indices.
    pub fn score_items(&self, items: &[u32], out: &mut [f64]) -> Result<(), ModelError> {
        let n = self.n_items();
        assert_eq!(out.len(), n);
        match &self.state {
            ModelState::MostPop { popularity } => out.copy_from_slice(popularity),
            ModelState::ItemKnn { reverse, .. } => {
                out.fill(0.0);
                for &j in items {
                    let j = j as usize;
                    for (&i, &s) in reverse.row_indices(j).iter().zip(reverse.row_values(j)) {
                        out[i as usize] += s;
                    }
                }
            }
            ModelState::Ease { weights } => {
                out.fill(0.0);
                for &j in items {
                    let row = &weights[j as usize * n..(j as usize + 1) * n];
                    out.iter_mut().zip(row).for_each(|(o, &w)| *o += w);
                }
            }
            _ => {
                return Err(ModelError::Unsupported {
                    family: self.family(),
                    operation: "score an item sequence without a user profile",
                })
            }
        }
        Ok(())
    }
}

/// One user's ranked list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRecommendations {
    pub user: u32,
    pub items: Vec<ItemScore>,
}

/// Ranked lists for a set of users at cutoff `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationList {
    pub k: usize,
    pub filter_seen: bool,
    pub lists: Vec<UserRecommendations>,
}

impl RecommendationList {
    /// Users whose list came out empty (every item masked).
    pub fn empty_users(&self) -> usize {
        self.lists.iter().filter(|l| l.items.is_empty()).count()
    }
}

/// Exact top-`k` per user; with `filter_seen`, training items are masked first.
pub fn recommend(
    m: &TrainedModel,
    users: &[u32],
    k: usize,
    filter_seen: bool,
) -> Result<RecommendationList, ModelError> {
    if k < 1 {
        return Err(ModelError::InvalidCutoff);
    }
    if let Some(&bad) = users.iter().find(|&&u| u as usize >= m.n_users()) {
        return Err(ModelError::UnknownUser(bad));
    }
    let n = m.n_items();
    let lists = users
        .par_iter()
        .map_init(
            || vec![0.0; n],
            |scores, &u| {
                m.score_user(u, scores)?;
                let seen: &[u32] = if filter_seen {
                    m.train.user_items(u as usize)
                } else {
                    &[]
                };
                Ok(UserRecommendations {
                    user: u,
                    items: top_k(scores, k, seen),
                })
            },
        )
        .collect::<Result<Vec<_>, ModelError>>()?;
    Ok(RecommendationList { k, filter_seen, lists })
}

/// Ranking for an ad-hoc list of raw item IDs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRecommendations {
    pub items: Vec<ItemScore>,
    /// Raw IDs that are not in the model's catalog; they are ignored.
    pub unknown: Vec<String>,
}

/// Scores items against a raw item sequence; input items are excluded from the output.
pub fn recommend_from_items<S: AsRef<str>>(
    m: &TrainedModel,
    item_sequence: &[S],
    k: usize,
) -> Result<SequenceRecommendations, ModelError> {
    if k < 1 {
        return Err(ModelError::InvalidCutoff);
    }
    if !m.family().supports_item_sequences() {
        return Err(ModelError::Unsupported {
            family: m.family(),
            operation: "score an item sequence without a user profile",
        });
    }
    let map = m.train.item_map();
    let mut known = Vec::new();
    let mut unknown = Vec::new();
    for raw in item_sequence {
        match map.internal(raw.as_ref()) {
            Some(i) => known.push(i),
            None => unknown.push(raw.as_ref().to_owned()),
        }
    }
    if known.is_empty() {
        return Err(ModelError::NoKnownItems(item_sequence.len()));
    }
    let mut scores = vec![0.0; m.n_items()];
    m.score_items(&known, &mut scores)?;
    let mut excluded = known.clone();
    excluded.sort_unstable();
    excluded.dedup();
    Ok(SequenceRecommendations {
        items: top_k(&scores, k, &excluded),
        unknown,
    })
}
