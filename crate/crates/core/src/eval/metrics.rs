use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::ingest::Dataset;
use crate::models::RecommendationList;

/// Per-user relevant items, indexed by internal user index; each set sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceJudgments {
    sets: Vec<Vec<u32>>,
}

impl RelevanceJudgments {
    pub fn new(mut sets: Vec<Vec<u32>>) -> Self {
        for s in &mut sets {
            s.sort_unstable();
            s.dedup();
        }
        Self { sets }
    }

    /// Test interactions with rating at least `threshold` (all of them when `None`).
    pub fn from_dataset(test: &Dataset, threshold: Option<f64>) -> Self {
        let x = test.matrix();
        let sets = (0..x.n_rows())
            .map(|u| {
                x.row_indices(u)
                    .iter()
                    .zip(x.row_values(u))
                    .filter(|(_, &r)| threshold.is_none_or(|t| r >= t))
                    .map(|(&i, _)| i)
                    .collect()
            })
            .collect();
        Self { sets }
    }

    pub fn relevant(&self, user: u32) -> &[u32] {
        self.sets.get(user as usize).map_or(&[], Vec::as_slice)
    }

    /// Users with at least one relevant item, ascending.
    pub fn users(&self) -> Vec<u32> {
        (0..self.sets.len() as u32)
            .filter(|&u| !self.relevant(u).is_empty())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AccuracyMetric {
    Precision,
    Recall,
    HitRate,
    #[serde(rename = "MRR")]
    Mrr,
    #[serde(rename = "MAP")]
    Map,
    #[serde(rename = "nDCG")]
    Ndcg,
    F1,
}

impl AccuracyMetric {
    pub const ALL: [AccuracyMetric; 7] = [
        AccuracyMetric::Precision,
        AccuracyMetric::Recall,
        AccuracyMetric::HitRate,
        AccuracyMetric::Mrr,
        AccuracyMetric::Map,
        AccuracyMetric::Ndcg,
        AccuracyMetric::F1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AccuracyMetric::Precision => "Precision",
            AccuracyMetric::Recall => "Recall",
            AccuracyMetric::HitRate => "HitRate",
            AccuracyMetric::Mrr => "MRR",
            AccuracyMetric::Map => "MAP",
            AccuracyMetric::Ndcg => "nDCG",
            AccuracyMetric::F1 => "F1",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name().eq_ignore_ascii_case(s))
    }

    /// Value for one user given the relevance flags of the first `k` list positions.
    pub fn value(self, rel: &[bool], k: usize, n_relevant: usize) -> f64 {
        let rel = &rel[..rel.len().min(k)];
        let hits = rel.iter().filter(|&&r| r).count() as f64;
        match self {
            AccuracyMetric::Precision => hits / k as f64,
            AccuracyMetric::Recall => hits / n_relevant as f64,
            AccuracyMetric::HitRate => f64::from(u8::from(hits > 0.0)),
            AccuracyMetric::Mrr => rel.iter().position(|&r| r).map_or(0.0, |p| 1.0 / (p + 1) as f64),
            AccuracyMetric::Map => {
                let mut seen = 0.0;
                let mut sum = 0.0;
                for (r, &is_rel) in rel.iter().enumerate() {
                    if is_rel {
                        seen += 1.0;
                        sum += seen / (r + 1) as f64;
                    }
                }
                sum / k.min(n_relevant) as f64
            }
            AccuracyMetric::Ndcg => {
                let dcg: f64 = rel
                    .iter()
                    .enumerate()
                    .filter(|(_, &r)| r)
                    .map(|(r, _)| 1.0 / ((r + 2) as f64).log2())
                    .sum();
                let idcg: f64 = (0..k.min(n_relevant)).map(|r| 1.0 / ((r + 2) as f64).log2()).sum();
                dcg / idcg
            }
            AccuracyMetric::F1 => {
                let p = hits / k as f64;
                let r = hits / n_relevant as f64;
                if p + r > 0.0 {
                    2.0 * p * r / (p + r)
                } else {
                    0.0
                }
            }
        }
    }
}

impl fmt::Display for AccuracyMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

/// One accuracy metric at one cutoff, per user and averaged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub metric: AccuracyMetric,
    pub k: usize,
    pub per_user: Vec<f64>,
    pub mean: f64,
}

impl MetricValues {
    pub fn label(&self) -> String {
        format!("{}@{}", self.metric, self.k)
    }
}

/// A catalog-level value with no per-user decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemMetric {
    pub name: String,
    pub k: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Evaluated users; every per-user vector is aligned to this list.
    pub users: Vec<u32>,
    /// Users in the recommendation list with no relevant item; excluded from means.
    pub skipped_users: usize,
    pub accuracy: Vec<MetricValues>,
    pub system: Vec<SystemMetric>,
}

impl MetricReport {
    pub fn get(&self, metric: AccuracyMetric, k: usize) -> Option<&MetricValues> {
        self.accuracy.iter().find(|m| m.metric == metric && m.k == k)
    }

    pub fn system_value(&self, name: &str, k: usize) -> Option<f64> {
        self.system.iter().find(|m| m.name == name && m.k == k).map(|m| m.value)
    }
}

/// Per-user accuracy for each metric and cutoff. Users whose relevance set is empty
/// are skipped and counted.
pub fn compute_accuracy(
    recs: &RecommendationList,
    judg: &RelevanceJudgments,
    ks: &[usize],
    metrics: &[AccuracyMetric],
) -> Result<MetricReport, EvalError> {
    if ks.iter().any(|&k| k < 1) {
        return Err(EvalError::InvalidCutoff);
    }
    if let Some(&k) = ks.iter().find(|&&k| k > recs.k) {
        return Err(EvalError::CutoffAboveList { k, list: recs.k });
    }
    let lists: Vec<_> = recs
        .lists
        .iter()
        .filter(|l| !judg.relevant(l.user).is_empty())
        .collect();
    if lists.is_empty() {
        return Err(EvalError::NoEvaluatedUsers);
    }
    let rows: Vec<Vec<f64>> = lists
        .par_iter()
        .map(|l| {
            let relevant = judg.relevant(l.user);
            let flags: Vec<bool> = l
                .items
                .iter()
                .map(|s| relevant.binary_search(&s.item).is_ok())
                .collect();
            ks.iter()
                .flat_map(|&k| metrics.iter().map(move |m| (m, k)))
                .map(|(m, k)| m.value(&flags, k, relevant.len()))
                .collect()
        })
        .collect();
    let mut accuracy = Vec::new();
    let mut col = 0;
    for &k in ks {
        for &metric in metrics {
            let per_user: Vec<f64> = rows.iter().map(|r| r[col]).collect();
            let mean = per_user.iter().sum::<f64>() / per_user.len() as f64;
            accuracy.push(MetricValues {
                metric,
                k,
                per_user,
                mean,
            });
            col += 1;
        }
    }
    Ok(MetricReport {
        users: lists.iter().map(|l| l.user).collect(),
        skipped_users: recs.lists.len() - lists.len(),
        accuracy,
        system: Vec::new(),
    })
}
