//! Randomized properties across module boundaries.

mod common;

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use warpbench::eval::{compute_accuracy, AccuracyMetric, RelevanceJudgments};
use warpbench::ingest::{
    build_dataset, load_interactions, write_tsv, Column, Dataset, DedupPolicy, RawInteraction, Schema,
};
use warpbench::models::{
    fit, load_checkpoint, recommend, save_checkpoint, top_k, Deadline, Family, ItemScore, ModelConfig, ParamValue,
    RecommendationList, UserRecommendations,
};
use warpbench::prep::{split, SplitMode, SplitOutput, SplitSpec, SplitStrategy};

type Triple = (u32, u32, i64);

fn cells() -> impl Strategy<Value = BTreeMap<(u8, u8), (u8, i64)>> {
    prop::collection::btree_map((0u8..12, 0u8..15), (1u8..=5, 0i64..40), 1..90)
}

fn dataset(cells: &BTreeMap<(u8, u8), (u8, i64)>) -> Dataset {
    let records = cells
        .iter()
        .map(|(&(u, i), &(r, ts))| RawInteraction {
            user_id: format!("u{u}"),
            item_id: format!("i{i}"),
            rating: f64::from(r),
            timestamp: Some(ts),
        })
        .collect();
    build_dataset(records, DedupPolicy::Error).unwrap()
}

fn triples(d: &Dataset) -> BTreeSet<Triple> {
    d.interactions()
        .map(|x| (x.user, x.item, x.timestamp.unwrap()))
        .collect()
}

fn strategy() -> impl Strategy<Value = SplitStrategy> {
    let mode = prop_oneof![Just(SplitMode::Random), Just(SplitMode::Temporal)];
    prop_oneof![
        (mode.clone(), 0.1f64..0.9).prop_map(|(mode, r)| SplitStrategy::Holdout {
            mode,
            ratios: vec![r, 1.0 - r]
        }),
        (mode.clone(), 0.1f64..0.6, 0.1f64..0.3).prop_map(|(mode, a, b)| SplitStrategy::Holdout {
            mode,
            ratios: vec![a, b, 1.0 - a - b]
        }),
        (mode, 1usize..4, 0usize..3).prop_map(|(mode, k, validation_k)| SplitStrategy::LeaveKOut {
            mode,
            k,
            validation_k
        }),
        (5i64..35).prop_map(|t| SplitStrategy::FixedTimestamp {
            test_from: t,
            validation_from: None
        }),
        (5i64..20, 1i64..15).prop_map(|(v, gap)| SplitStrategy::FixedTimestamp {
            test_from: v + gap,
            validation_from: Some(v)
        }),
        (2usize..6).prop_map(|folds| SplitStrategy::KFold { folds }),
    ]
}

fn check_partition(all: &BTreeSet<Triple>, parts: &[&Dataset]) -> Result<(), TestCaseError> {
    let mut union = BTreeSet::new();
    for p in parts {
        for t in triples(p) {
            prop_assert!(union.insert(t), "interaction {t:?} appears in two parts");
        }
    }
    prop_assert_eq!(&union, all);
    Ok(())
}

fn max_ts(d: &Dataset, u: u32) -> Option<i64> {
    d.interactions()
        .filter(|x| x.user == u)
        .map(|x| x.timestamp.unwrap())
        .max()
}

fn min_ts(d: &Dataset, u: u32) -> Option<i64> {
    d.interactions()
        .filter(|x| x.user == u)
        .map(|x| x.timestamp.unwrap())
        .min()
}

fn parts(out: &SplitOutput) -> Vec<&Dataset> {
    let mut v = vec![&out.train];
    v.extend(out.validation.as_ref());
    v.push(&out.test);
    v
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn splits_partition_and_respect_time(cells in cells(), strategy in strategy(), seed in any::<u64>()) {
        let d = dataset(&cells);
        let all = triples(&d);
        let spec = SplitSpec::new(strategy.clone(), seed);
        let out = match split(&d, &spec) {
            Ok(o) => o,
            // too few interactions for the requested folds is a reported error, not a bad split
            Err(e) => {
                prop_assert!(matches!(strategy, SplitStrategy::KFold { .. }), "{e}");
                return Ok(());
            }
        };
        if let SplitStrategy::KFold { folds } = strategy {
            prop_assert_eq!(out.folds.len(), folds);
            let mut tests = BTreeSet::new();
            for f in &out.folds {
                check_partition(&all, &[&f.train, &f.test])?;
                for t in triples(&f.test) {
                    prop_assert!(tests.insert(t));
                }
            }
            prop_assert_eq!(tests, all);
        } else {
            check_partition(&all, &parts(&out))?;
        }

        match strategy {
            SplitStrategy::Holdout { mode: SplitMode::Temporal, .. } | SplitStrategy::LeaveKOut { mode: SplitMode::Temporal, .. } => {
                for u in 0..d.n_users() as u32 {
                    let later: Vec<&Dataset> = parts(&out)[1..].to_vec();
                    if let (Some(tr), Some(te)) = (max_ts(&out.train, u), later.iter().filter_map(|p| min_ts(p, u)).min()) {
                        prop_assert!(tr <= te, "user {u}: train ts {tr} after held-out ts {te}");
                    }
                }
            }
            SplitStrategy::FixedTimestamp { test_from, validation_from } => {
                let train_cut = validation_from.unwrap_or(test_from);
                prop_assert!(triples(&out.train).iter().all(|t| t.2 < train_cut));
                prop_assert!(triples(&out.test).iter().all(|t| t.2 >= test_from));
                if let Some(v) = &out.validation {
                    prop_assert!(triples(v).iter().all(|t| (train_cut..test_from).contains(&t.2)));
                }
            }
            _ => {}
        }

        let again = split(&d, &spec).unwrap();
        prop_assert!(again.train == out.train && again.test == out.test && again.validation == out.validation);
    }

    #[test]
    fn tsv_round_trip(cells in cells()) {
        let d = dataset(&cells);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.tsv");
        write_tsv(&d, &path).unwrap();
        let schema = Schema::tsv(&[Column::User, Column::Item, Column::Rating, Column::Timestamp]);
        let back = build_dataset(load_interactions(&path, &schema).unwrap().records, DedupPolicy::Error).unwrap();
        let raw = |d: &Dataset| -> BTreeSet<(String, String, u64, i64)> {
            d.interactions()
                .map(|x| (
                    d.user_map().raw(x.user).unwrap().to_owned(),
                    d.item_map().raw(x.item).unwrap().to_owned(),
                    x.rating.to_bits(),
                    x.timestamp.unwrap(),
                ))
                .collect()
        };
        prop_assert_eq!(raw(&back), raw(&d));
        // a second export of the re-read data is byte-identical, so the order is fixed by the file
        let path2 = dir.path().join("again.tsv");
        write_tsv(&back, &path2).unwrap();
        let again = build_dataset(load_interactions(&path2, &schema).unwrap().records, DedupPolicy::Error).unwrap();
        prop_assert!(again == back);
    }

    #[test]
    fn build_is_deterministic(cells in cells()) {
        prop_assert!(dataset(&cells) == dataset(&cells));
    }

    #[test]
    fn metrics_bounded_and_ideal_ndcg(
        list in prop::collection::vec(0u32..25, 1..12).prop_map(|v| {
            let mut seen = BTreeSet::new();
            v.into_iter().filter(|i| seen.insert(*i)).collect::<Vec<_>>()
        }),
        rel in prop::collection::btree_set(0u32..25, 1..10),
        k in 1usize..12,
    ) {
        let k = k.min(list.len());
        let recs = RecommendationList {
            k: list.len(),
            filter_seen: false,
            lists: vec![UserRecommendations {
                user: 0,
                items: list.iter().enumerate().map(|(r, &item)| ItemScore { item, score: -(r as f64) }).collect(),
            }],
        };
        let judg = RelevanceJudgments::new(vec![rel.iter().copied().collect()]);
        let report = compute_accuracy(&recs, &judg, &[k], &AccuracyMetric::ALL).unwrap();
        for m in &report.accuracy {
            prop_assert!((0.0..=1.0).contains(&m.mean), "{} = {}", m.label(), m.mean);
            prop_assert_eq!(m.mean, m.per_user[0]);
        }
        let ideal = list.iter().take(k.min(rel.len())).all(|i| rel.contains(i)) && list.len() >= k.min(rel.len());
        let ndcg = report.get(AccuracyMetric::Ndcg, k).unwrap().mean;
        prop_assert_eq!((ndcg - 1.0).abs() < 1e-12, ideal);
    }

    #[test]
    fn ranking_ignores_monotone_transforms(
        scores in prop::collection::vec(prop_oneof![Just(0.0), Just(1.0), -5.0f64..5.0], 1..40),
        k in 1usize..15,
        excluded in prop::collection::btree_set(0u32..40, 0..5),
    ) {
        let excluded: Vec<u32> = excluded.into_iter().filter(|&i| (i as usize) < scores.len()).collect();
        let squashed: Vec<f64> = scores.iter().map(|s| 3.0 * s.exp() + 1.0).collect();
        let order = |v: &[ItemScore]| v.iter().map(|s| s.item).collect::<Vec<_>>();
        let a = top_k(&scores, k, &excluded);
        prop_assert_eq!(order(&a), order(&top_k(&squashed, k, &excluded)));
        prop_assert!(a.windows(2).all(|w| w[0].score > w[1].score || (w[0].score == w[1].score && w[0].item < w[1].item)));
    }
}

fn configs() -> Vec<ModelConfig> {
    let with = |family, params: &[(&str, ParamValue)]| {
        let map = params.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        ModelConfig::from_params(family, &map).unwrap()
    };
    vec![
        with(Family::MostPop, &[]),
        with(Family::Random, &[]),
        with(Family::ItemKnn, &[("neighbors", ParamValue::Int(5))]),
        with(Family::UserKnn, &[("neighbors", ParamValue::Int(5))]),
        with(Family::Ease, &[("l2", ParamValue::Real(10.0))]),
        with(
            Family::BprMf,
            &[
                ("factors", ParamValue::Int(4)),
                ("epochs", ParamValue::Int(3)),
                ("learning_rate", ParamValue::Real(0.05)),
            ],
        ),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn recommendations_are_in_range_unseen_and_sorted(cells in cells(), k in 1usize..20, seed in any::<u64>()) {
        let d = dataset(&cells);
        let users: Vec<u32> = (0..d.n_users() as u32).collect();
        let dir = tempfile::tempdir().unwrap();
        for cfg in configs() {
            let m = fit(&cfg, &d, seed, &Deadline::none()).unwrap();
            let recs = recommend(&m, &users, k, true).unwrap();
            for l in &recs.lists {
                let seen = d.user_items(l.user as usize);
                let unseen = d.n_items() - seen.len();
                prop_assert_eq!(l.items.len(), k.min(unseen), "{:?} user {}", cfg.family(), l.user);
                for s in &l.items {
                    prop_assert!((s.item as usize) < d.n_items());
                    prop_assert!(seen.binary_search(&s.item).is_err(), "{:?} recommended a seen item", cfg.family());
                }
                prop_assert!(l.items.windows(2).all(|w| w[0].score >= w[1].score));
            }
            let path = dir.path().join("m.wbck");
            save_checkpoint(&m, &path).unwrap();
            let back = load_checkpoint(&path, Some(&d.id_maps_digest())).unwrap();
            prop_assert_eq!(recommend(&back, &users, k, true).unwrap(), recs);
        }
    }
}
