use serde::{Deserialize, Serialize};

use super::PrepError;
use crate::ingest::Dataset;

/// The filter variants: three rating thresholds, k-core, and cold-entity removal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FilterSpec {
    /// Keep interactions with `rating >= threshold`.
    RatingGlobal {
        threshold: f64,
    },
    /// Keep interactions rated at least the user's mean rating.
    RatingUserMean,
    /// Keep interactions rated at least the item's mean rating.
    RatingItemMean,
    /// Iterated removal of users and items with fewer than `k` interactions.
    KCore {
        k: usize,
    },
    ColdUser {
        min: usize,
    },
    ColdItem {
        min: usize,
    },
    /// Single-pass user and item minimum-degree filter.
    Cold {
        min_user: usize,
        min_item: usize,
    },
}

impl FilterSpec {
    pub fn validate(&self) -> Result<(), PrepError> {
        match *self {
            FilterSpec::RatingGlobal { threshold } if !threshold.is_finite() => {
                Err(PrepError::InvalidFilter(format!("non-finite threshold {threshold}")))
            }
            FilterSpec::KCore { k: 0 } => Err(PrepError::InvalidFilter("k-core needs k >= 1".into())),
            _ => Ok(()),
        }
    }
}

/// Dispatches any [`FilterSpec`].
pub fn apply_filter(d: &Dataset, spec: &FilterSpec) -> Result<Dataset, PrepError> {
    spec.validate()?;
    match *spec {
        FilterSpec::RatingGlobal { .. } | FilterSpec::RatingUserMean | FilterSpec::RatingItemMean => {
            filter_by_rating(d, spec)
        }
        FilterSpec::KCore { k } => Ok(k_core(d, k)),
        FilterSpec::ColdUser { min } => Ok(cold_filter(d, min, 0)),
        FilterSpec::ColdItem { min } => Ok(cold_filter(d, 0, min)),
        FilterSpec::Cold { min_user, min_item } => Ok(cold_filter(d, min_user, min_item)),
    }
}

fn means(sums: &[f64], counts: &[usize]) -> Vec<f64> {
    sums.iter()
        .zip(counts)
        .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect()
}

/// Rating-threshold filtering. Entities left without interactions keep their index.
pub fn filter_by_rating(d: &Dataset, spec: &FilterSpec) -> Result<Dataset, PrepError> {
    let m = d.matrix();
    let mask: Vec<bool> = match *spec {
        FilterSpec::RatingGlobal { threshold } => {
            if !threshold.is_finite() {
                return Err(PrepError::InvalidFilter(format!("non-finite threshold {threshold}")));
            }
            m.values().iter().map(|&r| r >= threshold).collect()
        }
        FilterSpec::RatingUserMean => {
            let mut mask = Vec::with_capacity(m.nnz());
            for u in 0..m.n_rows() {
                let vals = m.row_values(u);
                let mean = vals.iter().sum::<f64>() / vals.len().max(1) as f64;
                mask.extend(vals.iter().map(|&r| r >= mean));
            }
            mask
        }
        FilterSpec::RatingItemMean => {
            let mut sums = vec![0.0; m.n_cols()];
            let mut counts = vec![0usize; m.n_cols()];
            for (_, i, r) in m.iter() {
                sums[i as usize] += r;
                counts[i as usize] += 1;
            }
            let mean = means(&sums, &counts);
            m.iter().map(|(_, i, r)| r >= mean[i as usize]).collect()
        }
        _ => {
            return Err(PrepError::InvalidFilter(format!(
                "{spec:?} is not a rating-threshold filter"
            )))
        }
    };
    Ok(d.select(&mask))
}

/// Maximal sub-dataset in which every remaining user and item has at least `k`
/// interactions. The result is a fixed point of `k_core(_, k)`.
pub fn k_core(d: &Dataset, k: usize) -> Dataset {
    let m = d.matrix();
    let t = m.transpose();
    let mut user_deg: Vec<usize> = (0..m.n_rows()).map(|u| m.row_len(u)).collect();
    let mut item_deg: Vec<usize> = (0..t.n_rows()).map(|i| t.row_len(i)).collect();
    let mut user_gone = vec![false; m.n_rows()];
    let mut item_gone = vec![false; t.n_rows()];

    // Entities are tagged: users as (true, u), items as (false, i).
    let mut stack: Vec<(bool, usize)> = Vec::new();
    for (u, &deg) in user_deg.iter().enumerate() {
        if deg < k {
            user_gone[u] = true;
            stack.push((true, u));
        }
    }
    for (i, &deg) in item_deg.iter().enumerate() {
        if deg < k {
            item_gone[i] = true;
            stack.push((false, i));
        }
    }
    // Removing an entity decrements each still-present neighbour once.
    while let Some((is_user, e)) = stack.pop() {
        if is_user {
            for &i in m.row_indices(e) {
                let i = i as usize;
                if !item_gone[i] {
                    item_deg[i] -= 1;
                    if item_deg[i] < k {
                        item_gone[i] = true;
                        stack.push((false, i));
                    }
                }
            }
        } else {
            for &u in t.row_indices(e) {
                let u = u as usize;
                if !user_gone[u] {
                    user_deg[u] -= 1;
                    if user_deg[u] < k {
                        user_gone[u] = true;
                        stack.push((true, u));
                    }
                }
            }
        }
    }
    let mask: Vec<bool> = m
        .iter()
        .map(|(u, i, _)| !user_gone[u as usize] && !item_gone[i as usize])
        .collect();
    d.select(&mask)
}

/// One pass over the original degrees: users below `min_user`, then items below
/// `min_item`, are dropped. Not iterated, unlike [`k_core`].
pub fn cold_filter(d: &Dataset, min_user: usize, min_item: usize) -> Dataset {
    let users = d.user_degrees();
    let items = d.item_degrees();
    let mask: Vec<bool> = d
        .matrix()
        .iter()
        .map(|(u, i, _)| users[u as usize] >= min_user && items[i as usize] >= min_item)
        .collect();
    d.select(&mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{build_dataset, DedupPolicy, RawInteraction};

    fn ds(rows: &[(&str, &str, f64)]) -> Dataset {
        build_dataset(
            rows.iter()
                .map(|&(u, i, r)| RawInteraction {
                    rating: r,
                    ..RawInteraction::implicit(u, i)
                })
                .collect(),
            DedupPolicy::Error,
        )
        .unwrap()
    }

    fn pairs(d: &Dataset) -> Vec<(String, String)> {
        d.interactions()
            .map(|it| {
                (
                    d.user_map().raw(it.user).unwrap().to_owned(),
                    d.item_map().raw(it.item).unwrap().to_owned(),
                )
            })
            .collect()
    }

    #[test]
    fn global_threshold() {
        let d = ds(&[
            ("u", "a", 1.0),
            ("u", "b", 2.0),
            ("u", "c", 3.0),
            ("u", "d", 4.0),
            ("u", "e", 5.0),
        ]);
        let f = filter_by_rating(&d, &FilterSpec::RatingGlobal { threshold: 4.0 }).unwrap();
        assert_eq!(f.n_interactions(), 2);
        assert_eq!(f.n_items(), 5);
    }

    #[test]
    fn user_mean_threshold() {
        let d = ds(&[("u", "a", 2.0), ("u", "b", 4.0)]);
        let f = filter_by_rating(&d, &FilterSpec::RatingUserMean).unwrap();
        assert_eq!(pairs(&f), vec![("u".to_owned(), "b".to_owned())]);
    }

    #[test]
    fn item_mean_threshold() {
        let d = ds(&[("u", "a", 2.0), ("v", "a", 4.0), ("v", "b", 1.0)]);
        let f = filter_by_rating(&d, &FilterSpec::RatingItemMean).unwrap();
        assert_eq!(
            pairs(&f),
            vec![("v".to_owned(), "a".to_owned()), ("v".to_owned(), "b".to_owned())]
        );
    }

    #[test]
    fn zero_threshold_on_implicit_is_identity() {
        let d = ds(&[("u", "a", 1.0), ("v", "b", 1.0)]);
        let f = filter_by_rating(&d, &FilterSpec::RatingGlobal { threshold: 0.0 }).unwrap();
        assert_eq!(f, d);
    }

    #[test]
    fn rating_filter_rejects_other_kinds() {
        let d = ds(&[("u", "a", 1.0)]);
        assert!(filter_by_rating(&d, &FilterSpec::KCore { k: 1 }).is_err());
    }

    #[test]
    fn k_core_complete_bipartite_unchanged() {
        let d = ds(&[
            ("u1", "i1", 1.0),
            ("u1", "i2", 1.0),
            ("u2", "i1", 1.0),
            ("u2", "i2", 1.0),
        ]);
        assert_eq!(k_core(&d, 2), d);
    }

    #[test]
    fn k_core_cascade_empties() {
        let d = ds(&[("u1", "i1", 1.0), ("u1", "i2", 1.0), ("u2", "i1", 1.0)]);
        let core = k_core(&d, 2);
        assert_eq!(core.n_interactions(), 0);
        assert_eq!(core.n_users(), 2);
    }

    #[test]
    fn k_core_one_is_identity() {
        let d = ds(&[("u1", "i1", 1.0), ("u2", "i2", 1.0), ("u2", "i3", 1.0)]);
        assert_eq!(k_core(&d, 1), d);
    }

    #[test]
    fn cold_filter_single_pass() {
        let d = ds(&[("u1", "i1", 1.0), ("u1", "i2", 1.0), ("u2", "i1", 1.0)]);
        let f = cold_filter(&d, 2, 2);
        assert_eq!(pairs(&f), vec![("u1".to_owned(), "i1".to_owned())]);
        assert_eq!(cold_filter(&d, 0, 0), d);
    }

    #[test]
    fn cold_user_threshold() {
        let d = ds(&[("a", "x", 1.0), ("b", "x", 1.0), ("b", "y", 1.0), ("b", "z", 1.0)]);
        let f = apply_filter(&d, &FilterSpec::ColdUser { min: 2 }).unwrap();
        assert_eq!(f.user_degrees(), vec![0, 3]);
    }

    #[test]
    fn k_zero_rejected() {
        let d = ds(&[("a", "x", 1.0)]);
        assert!(apply_filter(&d, &FilterSpec::KCore { k: 0 }).is_err());
    }

    #[test]
    fn spec_deserializes_from_toml() {
        let spec: FilterSpec = toml::from_str("kind = \"k-core\"\nk = 5").unwrap();
        assert_eq!(spec, FilterSpec::KCore { k: 5 });
        let spec: FilterSpec = toml::from_str("kind = \"rating-global\"\nthreshold = 4.0").unwrap();
        assert_eq!(spec, FilterSpec::RatingGlobal { threshold: 4.0 });
    }
}
