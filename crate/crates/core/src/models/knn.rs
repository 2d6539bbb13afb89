use rayon::prelude::*;

use super::{Deadline, KnnParams, ModelConfig, ModelError, ModelState, Similarity, TrainedModel};
use crate::ingest::Dataset;
use crate::sparse::Csr;

/// Per-entity neighbour lists, each sorted by similarity descending (ties by index),
/// self excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborLists {
    offsets: Vec<usize>,
    ids: Vec<u32>,
    sims: Vec<f64>,
}

impl NeighborLists {
    pub(crate) fn from_raw(offsets: Vec<usize>, ids: Vec<u32>, sims: Vec<f64>) -> Result<Self, String> {
        if offsets.first() != Some(&0)
            || *offsets.last().unwrap() != ids.len()
            || ids.len() != sims.len()
            || offsets.windows(2).any(|w| w[0] > w[1])
        {
            return Err("inconsistent neighbour list arrays".into());
        }
        Ok(Self { offsets, ids, sims })
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn list(&self, r: usize) -> impl Iterator<Item = (u32, f64)> + '_ {
        let range = self.offsets[r]..self.offsets[r + 1];
        self.ids[range.clone()]
            .iter()
            .copied()
            .zip(self.sims[range].iter().copied())
    }

    pub(crate) fn raw(&self) -> (&[usize], &[u32], &[f64]) {
        (&self.offsets, &self.ids, &self.sims)
    }

    /// Transposed lists as a matrix: row `j` holds `(i, sim(i, j))` for each `i`
    /// whose list contains `j`.
    pub(crate) fn reverse(&self, n: usize) -> Csr {
        let mut triplets: Vec<(u32, u32, f64)> = (0..self.len())
            .flat_map(|i| self.list(i).map(move |(j, s)| (j, i as u32, s)))
            .collect();
        triplets.sort_by_key(|&(j, i, _)| (j, i));
        Csr::from_sorted_triplets(n, self.len(), triplets)
    }
}

/// Similarities between the rows of `rows` (features are its columns), pruned to the
/// top `params.neighbors` positive values per row.
fn neighbor_lists(rows: &Csr, params: &KnnParams, deadline: &Deadline) -> Result<NeighborLists, ModelError> {
    let n = rows.n_rows();
    let cols = rows.transpose();
    let norms: Vec<f64> = (0..n)
        .map(|r| rows.row_values(r).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let degrees: Vec<f64> = (0..n).map(|r| rows.row_len(r) as f64).collect();
    let shrink = params.shrinkage;

    let lists: Vec<Vec<(u32, f64)>> = (0..n)
        .into_par_iter()
        .map_init(
            || (vec![0.0f64; n], Vec::<u32>::new()),
            |(acc, touched), a| {
                if deadline.expired() {
                    return Err(ModelError::TimeLimitExceeded);
                }
                for (&c, &va) in rows.row_indices(a).iter().zip(rows.row_values(a)) {
                    let c = c as usize;
                    for (&b, &vb) in cols.row_indices(c).iter().zip(cols.row_values(c)) {
                        if b as usize == a {
                            continue;
                        }
                        if acc[b as usize] == 0.0 {
                            touched.push(b);
                        }
                        acc[b as usize] += match params.similarity {
                            Similarity::Cosine => va * vb,
                            Similarity::Jaccard => 1.0,
                        };
                    }
                }
                let mut out: Vec<(u32, f64)> = Vec::with_capacity(touched.len());
                for &b in touched.iter() {
                    let inter = acc[b as usize];
                    acc[b as usize] = 0.0;
                    let denom = match params.similarity {
                        Similarity::Cosine => norms[a] * norms[b as usize] + shrink,
                        Similarity::Jaccard => degrees[a] + degrees[b as usize] - inter + shrink,
                    };
                    let sim = if denom > 0.0 { inter / denom } else { 0.0 };
                    if sim > 0.0 {
                        out.push((b, sim));
                    }
                }
                touched.clear();
                let order = |x: &(u32, f64), y: &(u32, f64)| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0));
                if out.len() > params.neighbors {
                    out.select_nth_unstable_by(params.neighbors - 1, order);
                    out.truncate(params.neighbors);
                }
                out.sort_unstable_by(order);
                Ok(out)
            },
        )
        .collect::<Result<_, ModelError>>()?;

    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0);
    let mut ids = Vec::new();
    let mut sims = Vec::new();
    for list in lists {
        for (b, s) in list {
            ids.push(b);
            sims.push(s);
        }
        offsets.push(ids.len());
    }
    Ok(NeighborLists { offsets, ids, sims })
}

/// Item-based KNN over the columns of the training matrix.
///
/// Cosine: `<x_i, x_j> / (|x_i| |x_j| + shrinkage)` on rating values.
/// Jaccard: `|U_i ∩ U_j| / (|U_i ∪ U_j| + shrinkage)`.
/// A user's score for item `i` is `Σ_j sim(i, j) · r(u, j)` over the profile.
pub fn fit_itemknn(train: &Dataset, params: &KnnParams, deadline: &Deadline) -> Result<TrainedModel, ModelError> {
    let cfg = ModelConfig::ItemKnn(params.clone());
    cfg.validate()?;
    let neighbors = neighbor_lists(&train.matrix().transpose(), params, deadline)?;
    let reverse = neighbors.reverse(train.n_items());
    Ok(TrainedModel::new(
        cfg,
        ModelState::ItemKnn { neighbors, reverse },
        train,
    ))
}

/// User-based KNN: `score(u, i) = Σ_{v ∈ topN(u)} sim(u, v) · r(v, i)`.
pub fn fit_userknn(train: &Dataset, params: &KnnParams, deadline: &Deadline) -> Result<TrainedModel, ModelError> {
    let cfg = ModelConfig::UserKnn(params.clone());
    cfg.validate()?;
    let neighbors = neighbor_lists(train.matrix(), params, deadline)?;
    Ok(TrainedModel::new(cfg, ModelState::UserKnn { neighbors }, train))
}
