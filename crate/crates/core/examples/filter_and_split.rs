//! Filters and split strategies on the sample ratings.

use std::path::PathBuf;

use warpbench::ingest::{build_dataset, compute_stats, load_interactions, DedupPolicy, Schema};
use warpbench::prep::{apply_filter, split, FilterSpec, SplitMode, SplitSpec, SplitStrategy};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/data/ratings.tsv");
    let loaded = load_interactions(&path, &Schema::default())?;
    let full = build_dataset(loaded.records, DedupPolicy::default())?;

    for spec in [
        FilterSpec::RatingGlobal { threshold: 4.0 },
        FilterSpec::RatingUserMean,
        FilterSpec::KCore { k: 10 },
        FilterSpec::Cold {
            min_user: 20,
            min_item: 20,
        },
    ] {
        let s = compute_stats(&apply_filter(&full, &spec)?);
        println!(
            "{spec:?}: {} users, {} items, {} interactions",
            s.n_users, s.n_items, s.n_interactions
        );
    }

    let core = apply_filter(&full, &FilterSpec::KCore { k: 5 })?;
    let last = core.timestamps().unwrap().iter().max().unwrap();
    let strategies = [
        SplitStrategy::Holdout {
            mode: SplitMode::Random,
            ratios: vec![0.7, 0.1, 0.2],
        },
        SplitStrategy::Holdout {
            mode: SplitMode::Temporal,
            ratios: vec![0.8, 0.2],
        },
        SplitStrategy::LeaveKOut {
            mode: SplitMode::Temporal,
            k: 1,
            validation_k: 1,
        },
        SplitStrategy::FixedTimestamp {
            test_from: last - 30 * 86_400,
            validation_from: None,
        },
        SplitStrategy::KFold { folds: 5 },
    ];
    for strategy in strategies {
        let name = format!("{strategy:?}");
        let out = split(&core, &SplitSpec::new(strategy, 42))?;
        let val = out.validation.as_ref().map_or(0, |v| v.n_interactions());
        println!(
            "{name}\n  train {} / validation {val} / test {}  folds {}  unsplittable users {}",
            out.train.n_interactions(),
            out.test.n_interactions(),
            out.folds.len(),
            out.provenance.unsplittable_users
        );
    }

    // same seed, same partition
    let a = split(&core, &SplitSpec::holdout(SplitMode::Random, &[0.8, 0.2], 9))?;
    let b = split(&core, &SplitSpec::holdout(SplitMode::Random, &[0.8, 0.2], 9))?;
    assert_eq!(a.test, b.test);
    println!("seeded split reproduced");
    Ok(())
}
