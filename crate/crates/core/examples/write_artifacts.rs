//! Assemble a run by hand and write its artifact directory with a digest manifest.

use std::path::PathBuf;

use warpbench::eval::{compute_accuracy, AccuracyMetric, RelevanceJudgments};
use warpbench::ingest::{build_dataset, compute_stats, load_interactions, DedupPolicy, Schema};
use warpbench::models::{fit, recommend, Deadline, Family, ModelConfig, ParamValue};
use warpbench::prep::{split, SplitMode, SplitSpec};
use warpbench::report::{verify_artifacts, write_artifacts, ArtifactBundle, RunInfo};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/data/ratings.tsv");
    let data = build_dataset(
        load_interactions(&path, &Schema::default())?.records,
        DedupPolicy::default(),
    )?;
    let parts = split(&data, &SplitSpec::holdout(SplitMode::Temporal, &[0.8, 0.2], 0))?;
    let judgments = RelevanceJudgments::from_dataset(&parts.test, None);

    let cfg = ModelConfig::from_params(Family::Ease, &[("l2".to_string(), ParamValue::Real(100.0))].into())?;
    let model = fit(&cfg, &parts.train, 0, &Deadline::none())?;
    let recs = recommend(&model, &judgments.users(), 10, true)?;
    let report = compute_accuracy(
        &recs,
        &judgments,
        &[10],
        &[AccuracyMetric::Ndcg, AccuracyMetric::Recall],
    )?;

    let bundle = ArtifactBundle {
        run: RunInfo {
            pipeline: "example".into(),
            engine_version: warpbench::ENGINE_VERSION.into(),
            seed: 0,
            dataset: Some(compute_stats(&data)),
            split: Some(parts.provenance.clone()),
            ..RunInfo::default()
        },
        user_map: Some(data.user_map().clone()),
        item_map: Some(data.item_map().clone()),
        metrics: vec![("ease".into(), report)],
        recommendations: vec![("ease".into(), recs)],
        checkpoints: vec![("ease".into(), &model)],
        ..ArtifactBundle::default()
    };

    let out = tempfile::tempdir()?;
    let manifest = write_artifacts(&bundle, out.path())?;
    for a in &manifest.artifacts {
        println!("{:<24} {:>8} B  {}", a.path, a.bytes, &a.sha256[..16]);
    }
    print!("{}", std::fs::read_to_string(out.path().join("metrics/summary.tsv"))?);

    verify_artifacts(out.path())?;
    std::fs::write(out.path().join("recs/ease.tsv"), "tampered\n")?;
    println!("after tampering: {}", verify_artifacts(out.path()).unwrap_err());
    Ok(())
}
