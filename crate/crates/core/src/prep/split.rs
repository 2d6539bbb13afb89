use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::PrepError;
use crate::ingest::Dataset;
use crate::tune::seed::derived_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    #[default]
    Random,
    Temporal,
}

/// Strategy-specific split parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SplitStrategy {
    /// Per-user ratio split. `ratios` is `[train, test]` or `[train, validation, test]`.
    Holdout {
        #[serde(default)]
        mode: SplitMode,
        ratios: Vec<f64>,
    },
    /// Per-user: withhold `k` interactions to test, then `validation_k` of the rest.
    LeaveKOut {
        #[serde(default)]
        mode: SplitMode,
        k: usize,
        #[serde(default)]
        validation_k: usize,
    },
    /// Global cut: `ts < test_from` trains, `ts >= test_from` tests.
    FixedTimestamp {
        test_from: i64,
        #[serde(default)]
        validation_from: Option<i64>,
    },
    KFold {
        folds: usize,
    },
}

/// A strategy plus the seed anchoring its randomness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    #[serde(flatten)]
    pub strategy: SplitStrategy,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(strategy: SplitStrategy, seed: u64) -> Self {
        Self { strategy, seed }
    }

    pub fn holdout(mode: SplitMode, ratios: &[f64], seed: u64) -> Self {
        Self::new(
            SplitStrategy::Holdout {
                mode,
                ratios: ratios.to_vec(),
            },
            seed,
        )
    }

    pub fn validate(&self) -> Result<(), PrepError> {
        let bad = |m: String| Err(PrepError::InvalidSplit(m));
        match &self.strategy {
            SplitStrategy::Holdout { ratios, .. } => {
                if ratios.len() != 2 && ratios.len() != 3 {
                    return bad(format!("expected 2 or 3 ratios, got {}", ratios.len()));
                }
                let (train, test) = (ratios[0], *ratios.last().unwrap());
                let val = if ratios.len() == 3 { ratios[1] } else { 0.0 };
                if !(train > 0.0 && train < 1.0 && test > 0.0 && test < 1.0) || !(0.0..1.0).contains(&val) {
                    return bad(format!("ratios {ratios:?} must lie in (0, 1)"));
                }
                if (train + val + test - 1.0).abs() > 1e-9 {
                    return bad(format!("ratios {ratios:?} do not sum to 1"));
                }
            }
            SplitStrategy::LeaveKOut { k, .. } if *k == 0 => return bad("leave-k-out needs k >= 1".into()),
            SplitStrategy::FixedTimestamp {
                test_from,
                validation_from: Some(v),
            } if v >= test_from => return bad(format!("validation_from {v} must precede test_from {test_from}")),
            SplitStrategy::KFold { folds } if *folds < 2 => return bad("k-fold needs at least 2 folds".into()),
            _ => {}
        }
        Ok(())
    }

    fn is_temporal(&self) -> bool {
        match &self.strategy {
            SplitStrategy::Holdout { mode, .. } | SplitStrategy::LeaveKOut { mode, .. } => *mode == SplitMode::Temporal,
            SplitStrategy::FixedTimestamp { .. } => true,
            SplitStrategy::KFold { .. } => false,
        }
    }
}

/// Where a split came from; serialized into the run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitProvenance {
    pub spec: SplitSpec,
    /// Users left wholly in train because they had too few interactions.
    pub unsplittable_users: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fold {
    pub train: Dataset,
    pub test: Dataset,
}

/// Disjoint partitions of one dataset.
///
/// For k-fold splits `train`/`test` mirror fold 0 and `folds` holds every fold.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitOutput {
    pub train: Dataset,
    pub validation: Option<Dataset>,
    pub test: Dataset,
    pub folds: Vec<Fold>,
    pub provenance: SplitProvenance,
}

const TRAIN: u8 = 0;
const VALIDATION: u8 = 1;
const TEST: u8 = 2;

struct Assignment {
    part: Vec<u8>,
    unsplittable: usize,
    has_validation: bool,
}

impl Assignment {
    fn into_output(self, d: &Dataset, spec: &SplitSpec) -> SplitOutput {
        let mask = |p: u8| -> Vec<bool> { self.part.iter().map(|&x| x == p).collect() };
        SplitOutput {
            train: d.select(&mask(TRAIN)),
            validation: self.has_validation.then(|| d.select(&mask(VALIDATION))),
            test: d.select(&mask(TEST)),
            folds: Vec::new(),
            provenance: SplitProvenance {
                spec: spec.clone(),
                unsplittable_users: self.unsplittable,
            },
        }
    }
}

/// Flat positions of user `u`'s interactions: shuffled (random) or oldest-first
/// with ties broken by item index (temporal).
fn user_order(d: &Dataset, u: usize, mode: SplitMode, seed: u64) -> Vec<usize> {
    let m = d.matrix();
    let mut order: Vec<usize> = m.row_range(u).collect();
    match mode {
        SplitMode::Random => order.shuffle(&mut derived_rng(seed, "split", u as u64)),
        SplitMode::Temporal => {
            let ts = d.timestamps().expect("checked by caller");
            // positions within a row are already in item order; a stable sort keeps it
            order.sort_by_key(|&k| ts[k]);
        }
    }
    order
}

/// Applies `counts(n) -> (n_validation, n_test)` per user; `None` leaves the user in train.
fn per_user<F>(d: &Dataset, mode: SplitMode, seed: u64, counts: F) -> Assignment
where
    F: Fn(usize) -> Option<(usize, usize)> + Sync,
{
    let m = d.matrix();
    let per: Vec<(Vec<u8>, bool)> = (0..d.n_users())
        .into_par_iter()
        .map(|u| {
            let range = m.row_range(u);
            let n = range.len();
            let mut labels = vec![TRAIN; n];
            if n == 0 {
                return (labels, false);
            }
            let Some((n_val, n_test)) = counts(n) else {
                return (labels, true);
            };
            let order = user_order(d, u, mode, seed);
            let start = range.start;
            for &k in &order[n - n_test..] {
                labels[k - start] = TEST;
            }
            for &k in &order[n - n_test - n_val..n - n_test] {
                labels[k - start] = VALIDATION;
            }
            (labels, false)
        })
        .collect();
    let unsplittable = per.iter().filter(|(_, skipped)| *skipped).count();
    Assignment {
        part: per.into_iter().flat_map(|(l, _)| l).collect(),
        unsplittable,
        has_validation: false,
    }
}

fn require_timestamps(d: &Dataset, spec: &SplitSpec, what: &'static str) -> Result<(), PrepError> {
    if spec.is_temporal() && !d.has_timestamps() {
        return Err(PrepError::MissingTimestamps(what));
    }
    Ok(())
}

fn round_count(n: usize, frac: f64) -> usize {
    (n as f64 * frac).round() as usize
}

/// Per-user ratio holdout (random or temporal).
pub fn split_holdout(d: &Dataset, spec: &SplitSpec) -> Result<SplitOutput, PrepError> {
    spec.validate()?;
    let SplitStrategy::Holdout { mode, ratios } = &spec.strategy else {
        return Err(PrepError::InvalidSplit("expected a holdout spec".into()));
    };
    require_timestamps(d, spec, "temporal holdout")?;
    let test_frac = *ratios.last().unwrap();
    let val_frac = if ratios.len() == 3 { ratios[1] } else { 0.0 };
    // validation is a holdout of the train portion with the rescaled ratio
    let val_of_rest = val_frac / (ratios[0] + val_frac);
    let mut a = per_user(d, *mode, spec.seed, |n| {
        let n_test = round_count(n, test_frac);
        if n_test == 0 || n_test >= n {
            return None;
        }
        let rest = n - n_test;
        let n_val = round_count(rest, val_of_rest);
        let n_val = if n_val >= rest { 0 } else { n_val };
        Some((n_val, n_test))
    });
    a.has_validation = val_frac > 0.0;
    Ok(a.into_output(d, spec))
}

/// Per-user leave-k-out (random or temporal).
pub fn split_leave_k_out(d: &Dataset, spec: &SplitSpec) -> Result<SplitOutput, PrepError> {
    spec.validate()?;
    let SplitStrategy::LeaveKOut { mode, k, validation_k } = spec.strategy else {
        return Err(PrepError::InvalidSplit("expected a leave-k-out spec".into()));
    };
    require_timestamps(d, spec, "temporal leave-k-out")?;
    let mut a = per_user(d, mode, spec.seed, |n| {
        if n <= k {
            return None;
        }
        let n_val = if n - k > validation_k { validation_k } else { 0 };
        Some((n_val, k))
    });
    a.has_validation = validation_k > 0;
    Ok(a.into_output(d, spec))
}

/// Global timestamp cut.
pub fn split_fixed_timestamp(d: &Dataset, spec: &SplitSpec) -> Result<SplitOutput, PrepError> {
    spec.validate()?;
    let SplitStrategy::FixedTimestamp {
        test_from,
        validation_from,
    } = spec.strategy
    else {
        return Err(PrepError::InvalidSplit("expected a fixed-timestamp spec".into()));
    };
    let ts = d
        .timestamps()
        .ok_or(PrepError::MissingTimestamps("fixed-timestamp split"))?;
    let val_from = validation_from.unwrap_or(test_from);
    let part = ts
        .iter()
        .map(|&t| {
            if t >= test_from {
                TEST
            } else if t >= val_from {
                VALIDATION
            } else {
                TRAIN
            }
        })
        .collect();
    Ok(Assignment {
        part,
        unsplittable: 0,
        has_validation: validation_from.is_some(),
    }
    .into_output(d, spec))
}

/// Shuffled partition of all interactions into `folds` near-equal groups.
pub fn split_kfold(d: &Dataset, spec: &SplitSpec) -> Result<SplitOutput, PrepError> {
    spec.validate()?;
    let SplitStrategy::KFold { folds } = spec.strategy else {
        return Err(PrepError::InvalidSplit("expected a k-fold spec".into()));
    };
    let nnz = d.n_interactions();
    if nnz < folds {
        return Err(PrepError::TooFewInteractions {
            folds,
            interactions: nnz,
        });
    }
    let mut order: Vec<usize> = (0..nnz).collect();
    order.shuffle(&mut derived_rng(spec.seed, "kfold", 0));
    let mut group = vec![0usize; nnz];
    for (rank, &pos) in order.iter().enumerate() {
        group[pos] = rank % folds;
    }
    let fold_list: Vec<Fold> = (0..folds)
        .map(|f| {
            let test_mask: Vec<bool> = group.iter().map(|&g| g == f).collect();
            let train_mask: Vec<bool> = test_mask.iter().map(|&t| !t).collect();
            Fold {
                train: d.select(&train_mask),
                test: d.select(&test_mask),
            }
        })
        .collect();
    Ok(SplitOutput {
        train: fold_list[0].train.clone(),
        validation: None,
        test: fold_list[0].test.clone(),
        folds: fold_list,
        provenance: SplitProvenance {
            spec: spec.clone(),
            unsplittable_users: 0,
        },
    })
}

/// Dispatches on the spec's strategy.
pub fn split(d: &Dataset, spec: &SplitSpec) -> Result<SplitOutput, PrepError> {
    match spec.strategy {
        SplitStrategy::Holdout { .. } => split_holdout(d, spec),
        SplitStrategy::LeaveKOut { .. } => split_leave_k_out(d, spec),
        SplitStrategy::FixedTimestamp { .. } => split_fixed_timestamp(d, spec),
        SplitStrategy::KFold { .. } => split_kfold(d, spec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{build_dataset, DedupPolicy, RawInteraction};

    fn timed(rows: &[(&str, &str, i64)]) -> Dataset {
        build_dataset(
            rows.iter()
                .map(|&(u, i, t)| RawInteraction {
                    timestamp: Some(t),
                    ..RawInteraction::implicit(u, i)
                })
                .collect(),
            DedupPolicy::Error,
        )
        .unwrap()
    }

    fn grid(users: usize, items: usize) -> Dataset {
        let mut rows = Vec::new();
        for u in 0..users {
            for i in 0..items {
                rows.push(RawInteraction {
                    timestamp: Some((u * items + i) as i64),
                    ..RawInteraction::implicit(format!("u{u}"), format!("i{i}"))
                });
            }
        }
        build_dataset(rows, DedupPolicy::Error).unwrap()
    }

    fn test_timestamps(s: &SplitOutput) -> Vec<i64> {
        let mut ts = s.test.timestamps().unwrap().to_vec();
        ts.sort();
        ts
    }

    #[test]
    fn holdout_ninety_ten() {
        let d = grid(1, 10);
        let s = split_holdout(&d, &SplitSpec::holdout(SplitMode::Random, &[0.9, 0.1], 7)).unwrap();
        assert_eq!(s.train.n_interactions(), 9);
        assert_eq!(s.test.n_interactions(), 1);
        assert!(s.validation.is_none());
    }

    #[test]
    fn temporal_holdout_half() {
        let d = timed(&[("u", "a", 1), ("u", "b", 2), ("u", "c", 3), ("u", "d", 4)]);
        let s = split_holdout(&d, &SplitSpec::holdout(SplitMode::Temporal, &[0.5, 0.5], 0)).unwrap();
        assert_eq!(test_timestamps(&s), vec![3, 4]);
    }

    #[test]
    fn holdout_same_seed_identical() {
        let d = grid(20, 10);
        let spec = SplitSpec::holdout(SplitMode::Random, &[0.7, 0.1, 0.2], 99);
        assert_eq!(split_holdout(&d, &spec).unwrap(), split_holdout(&d, &spec).unwrap());
        let other = SplitSpec::holdout(SplitMode::Random, &[0.7, 0.1, 0.2], 100);
        assert_ne!(
            split_holdout(&d, &spec).unwrap().test,
            split_holdout(&d, &other).unwrap().test
        );
    }

    #[test]
    fn holdout_three_way() {
        let d = grid(1, 10);
        let s = split_holdout(&d, &SplitSpec::holdout(SplitMode::Random, &[0.8, 0.1, 0.1], 1)).unwrap();
        assert_eq!(s.train.n_interactions(), 8);
        assert_eq!(s.validation.as_ref().unwrap().n_interactions(), 1);
        assert_eq!(s.test.n_interactions(), 1);
    }

    #[test]
    fn small_users_stay_in_train() {
        let d = timed(&[
            ("u", "a", 1),
            ("v", "a", 1),
            ("v", "b", 2),
            ("v", "c", 3),
            ("v", "d", 4),
        ]);
        let s = split_holdout(&d, &SplitSpec::holdout(SplitMode::Random, &[0.75, 0.25], 0)).unwrap();
        assert_eq!(s.provenance.unsplittable_users, 1);
        assert_eq!(s.train.user_degrees()[0], 1);
        assert_eq!(s.test.n_interactions(), 1);
    }

    #[test]
    fn temporal_requires_timestamps() {
        let d = build_dataset(vec![RawInteraction::implicit("u", "a")], DedupPolicy::Error).unwrap();
        let spec = SplitSpec::holdout(SplitMode::Temporal, &[0.5, 0.5], 0);
        assert_eq!(
            split_holdout(&d, &spec).unwrap_err(),
            PrepError::MissingTimestamps("temporal holdout")
        );
        let fixed = SplitSpec::new(
            SplitStrategy::FixedTimestamp {
                test_from: 0,
                validation_from: None,
            },
            0,
        );
        assert!(matches!(
            split_fixed_timestamp(&d, &fixed),
            Err(PrepError::MissingTimestamps(_))
        ));
    }

    #[test]
    fn leave_one_out_temporal() {
        let d = timed(&[("u", "a", 5), ("u", "b", 9), ("u", "c", 12)]);
        let spec = SplitSpec::new(
            SplitStrategy::LeaveKOut {
                mode: SplitMode::Temporal,
                k: 1,
                validation_k: 0,
            },
            0,
        );
        assert_eq!(test_timestamps(&split_leave_k_out(&d, &spec).unwrap()), vec![12]);
    }

    #[test]
    fn leave_one_out_one_per_user() {
        let d = grid(100, 3);
        let spec = SplitSpec::new(
            SplitStrategy::LeaveKOut {
                mode: SplitMode::Random,
                k: 1,
                validation_k: 1,
            },
            3,
        );
        let s = split_leave_k_out(&d, &spec).unwrap();
        assert_eq!(s.test.n_interactions(), 100);
        assert_eq!(s.validation.as_ref().unwrap().n_interactions(), 100);
        assert_eq!(s, split_leave_k_out(&d, &spec).unwrap());
    }

    #[test]
    fn fixed_timestamp_boundaries() {
        let d = timed(&[("u", "a", 10), ("u", "b", 20), ("v", "a", 30)]);
        let at = |t| {
            split_fixed_timestamp(
                &d,
                &SplitSpec::new(
                    SplitStrategy::FixedTimestamp {
                        test_from: t,
                        validation_from: None,
                    },
                    0,
                ),
            )
            .unwrap()
        };
        assert_eq!(at(31).test.n_interactions(), 0);
        assert_eq!(at(10).train.n_interactions(), 0);
        let s = at(20);
        assert_eq!(s.train.timestamps().unwrap(), &[10]);
        assert_eq!(test_timestamps(&s), vec![20, 30]);
    }

    #[test]
    fn kfold_sizes() {
        let d = grid(1, 10);
        let spec = SplitSpec::new(SplitStrategy::KFold { folds: 5 }, 0);
        let s = split_kfold(&d, &spec).unwrap();
        assert!(s.folds.iter().all(|f| f.test.n_interactions() == 2));

        let d = grid(1, 11);
        let s = split_kfold(&d, &spec).unwrap();
        let mut sizes: Vec<usize> = s.folds.iter().map(|f| f.test.n_interactions()).collect();
        sizes.sort();
        assert_eq!(sizes, vec![2, 2, 2, 2, 3]);

        let tiny = grid(1, 3);
        assert!(matches!(
            split_kfold(&tiny, &spec),
            Err(PrepError::TooFewInteractions { .. })
        ));
    }

    #[test]
    fn spec_validation() {
        assert!(SplitSpec::holdout(SplitMode::Random, &[0.5, 0.4], 0)
            .validate()
            .is_err());
        assert!(SplitSpec::holdout(SplitMode::Random, &[1.0, 0.0], 0)
            .validate()
            .is_err());
        assert!(SplitSpec::new(SplitStrategy::KFold { folds: 1 }, 0).validate().is_err());
    }

    #[test]
    fn strategy_from_toml() {
        let s: SplitStrategy =
            toml::from_str("strategy = \"holdout\"\nmode = \"temporal\"\nratios = [0.9, 0.1]").unwrap();
        assert_eq!(
            s,
            SplitStrategy::Holdout {
                mode: SplitMode::Temporal,
                ratios: vec![0.9, 0.1]
            }
        );
        assert!(toml::from_str::<SplitStrategy>("strategy = \"k-fold\"\nfolds = 3\nbogus = 1").is_err());
    }
}
