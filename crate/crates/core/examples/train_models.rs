//! Fit every model family and show a few recommendations.

use std::path::PathBuf;

use warpbench::ingest::{build_dataset, load_interactions, DedupPolicy, Schema};
use warpbench::models::{fit, recommend, recommend_from_items, Deadline, Family, ModelConfig, ParamMap, ParamValue};
use warpbench::prep::{split, SplitMode, SplitSpec};

fn params(pairs: &[(&str, ParamValue)]) -> ParamMap {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/data/ratings.tsv");
    let data = build_dataset(
        load_interactions(&path, &Schema::default())?.records,
        DedupPolicy::default(),
    )?;
    let parts = split(&data, &SplitSpec::holdout(SplitMode::Random, &[0.8, 0.2], 1))?;

    let configs = [
        (Family::MostPop, params(&[])),
        (Family::Random, params(&[])),
        (Family::ItemKnn, params(&[("neighbors", ParamValue::Int(25))])),
        (
            Family::UserKnn,
            params(&[
                ("neighbors", ParamValue::Int(40)),
                ("similarity", ParamValue::Text("jaccard".into())),
            ]),
        ),
        (Family::Ease, params(&[("l2", ParamValue::Real(200.0))])),
        (
            Family::BprMf,
            params(&[
                ("factors", ParamValue::Int(16)),
                ("learning_rate", ParamValue::Real(0.05)),
                ("regularization", ParamValue::Real(0.01)),
                ("epochs", ParamValue::Int(20)),
            ]),
        ),
    ];

    let items = data.item_map();
    for (family, p) in configs {
        let cfg = ModelConfig::from_params(family, &p)?;
        let t = std::time::Instant::now();
        let model = fit(&cfg, &parts.train, 7, &Deadline::none())?;
        let recs = recommend(&model, &[0], 5, true)?;
        let top: Vec<&str> = recs.lists[0].items.iter().map(|s| items.raw(s.item).unwrap()).collect();
        println!(
            "{family:<8} fit {:>7.1} ms  user {}: {}",
            t.elapsed().as_secs_f64() * 1e3,
            data.user_map().raw(0).unwrap(),
            top.join(" ")
        );

        if family.supports_item_sequences() {
            let seq = recommend_from_items(&model, &["i1", "i4", "i7", "unknown-item"], 3)?;
            let top: Vec<&str> = seq.items.iter().map(|s| items.raw(s.item).unwrap()).collect();
            println!(
                "         from [i1 i4 i7]: {}  (ignored {:?})",
                top.join(" "),
                seq.unknown
            );
        }
    }
    Ok(())
}
