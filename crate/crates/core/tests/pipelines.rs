mod common;

use std::path::Path;

use warpbench::eval::AccuracyMetric;
use warpbench::pipeline::{
    eval_output_dir, run_design_pipeline, run_eval_pipeline, run_train_pipeline, validate_trace, EventRecorder,
    ExperimentConfig, PipelineError, Stage,
};
use warpbench::report::{read_manifest, verify_artifacts};

const SPLIT: &str = r#"
[split]
strategy = "holdout"
mode = "random"
ratios = [0.8, 0.2]
"#;

fn config(dir: &Path, models: &str) -> ExperimentConfig {
    let path = common::write_config(
        dir,
        "run.toml",
        &format!("{SPLIT}\n{models}\n[evaluation]\ncutoffs = [5, 10]\n"),
    );
    let mut cfg = ExperimentConfig::from_file(&path).unwrap();
    cfg.reporting.output = dir.join("out");
    cfg
}

#[test]
fn reruns_reproduce_every_deterministic_digest() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(
        dir.path(),
        r#"
[models.iknn]
family = "itemknn"
space = { neighbors = [10, 40] }

[models.bpr]
family = "bprmf"
params = { factors = 8, epochs = 4, learning_rate = 0.05 }
"#,
    );
    let first = run_train_pipeline(&cfg, &[]).unwrap();
    cfg.reporting.output = dir.path().join("again");
    let second = run_train_pipeline(&cfg, &[]).unwrap();
    assert_eq!(first.exit_code(), 0);
    assert!(!first.manifest.deterministic_digests().is_empty());
    assert_eq!(
        first.manifest.deterministic_digests(),
        second.manifest.deterministic_digests()
    );
    assert!(first
        .manifest
        .artifacts
        .iter()
        .any(|a| a.path == "energy.json" && !a.deterministic));
    verify_artifacts(&first.output).unwrap();
}

#[test]
fn design_equals_training_on_a_one_point_grid() {
    let dir = tempfile::tempdir().unwrap();
    let fixed = config(
        dir.path(),
        "[models.ease]\nfamily = \"ease\"\nparams = { l2 = 150.0 }\n",
    );
    let mut grid = config(
        dir.path(),
        "[models.ease]\nfamily = \"ease\"\nspace = { l2 = [150.0] }\n",
    );
    grid.reporting.output = dir.path().join("grid");
    let a = run_design_pipeline(&fixed, &[]).unwrap();
    let b = run_train_pipeline(&grid, &[]).unwrap();
    let (da, db) = (a.manifest.deterministic_digests(), b.manifest.deterministic_digests());
    for path in [
        "recs/ease.tsv",
        "metrics/summary.tsv",
        "metrics/per_user.tsv",
        "checkpoints/ease.wbck",
    ] {
        assert_eq!(da[path], db[path], "{path}");
    }
    assert_eq!(a.manifest.run.pipeline, "design");
}

#[test]
fn eval_reproduces_the_trained_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        r#"
[models.pop]
family = "mostpop"

[models.uknn]
family = "userknn"
params = { neighbors = 25 }
"#,
    );
    let trained = run_train_pipeline(&cfg, &[]).unwrap();
    let evaluated = run_eval_pipeline(&cfg, &[]).unwrap();
    assert_eq!(evaluated.exit_code(), 0);
    assert_eq!(evaluated.output, eval_output_dir(&cfg));
    for name in ["pop", "uknn"] {
        assert_eq!(trained.reports[name], evaluated.reports[name], "{name}");
    }
    let digest = |o: &warpbench::pipeline::RunOutcome, p: &str| o.manifest.deterministic_digests()[p].clone();
    assert_eq!(digest(&trained, "recs/uknn.tsv"), digest(&evaluated, "recs/uknn.tsv"));
    assert!(evaluated.studies.is_empty());
}

#[test]
fn eval_against_different_id_maps_fails_with_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "[models.pop]\nfamily = \"mostpop\"\n");
    run_train_pipeline(&cfg, &[]).unwrap();

    // half the rows introduce fewer ids, so the checkpoint's id maps no longer match
    let text = std::fs::read_to_string(common::sample_ratings()).unwrap();
    let half: String = text.lines().take(4000).map(|l| format!("{l}\n")).collect();
    let mut filtered = cfg.clone();
    filtered.dataset.path = dir.path().join("half.tsv");
    std::fs::write(&filtered.dataset.path, half).unwrap();
    let out = run_eval_pipeline(&filtered, &[]).unwrap();
    assert_eq!(out.exit_code(), 2);
    assert!(out.fatal.as_deref().unwrap().contains("pop"), "{:?}", out.fatal);
    let manifest = read_manifest(&out.output).unwrap();
    assert_eq!(manifest.run.failures.len(), 1);
    assert_eq!(manifest.run.failures[0].stage, "evaluate");
}

#[test]
fn one_failing_model_does_not_stop_the_others() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        r#"
[models.pop]
family = "mostpop"

[models.ease]
family = "ease"
params = { l2 = 100.0, max_items = 20 }
"#,
    );
    let out = run_train_pipeline(&cfg, &[]).unwrap();
    assert_eq!(out.exit_code(), 2);
    assert!(out.fatal.is_none());
    assert_eq!(out.failures.len(), 1);
    assert_eq!(out.failures[0].model, "ease");
    assert!(out.failures[0].error.contains("cap"), "{}", out.failures[0].error);
    assert!(out.reports.contains_key("pop") && !out.reports.contains_key("ease"));
    let digests = out.manifest.deterministic_digests();
    assert!(digests.contains_key("recs/pop.tsv"));
    assert!(!digests.contains_key("recs/ease.tsv"));
    assert_eq!(read_manifest(&out.output).unwrap().run.failures, out.failures);
}

#[test]
fn missing_data_is_a_runtime_failure_with_partial_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), "[models.pop]\nfamily = \"mostpop\"\n");
    cfg.dataset.path = dir.path().join("nowhere.tsv");
    let out = run_train_pipeline(&cfg, &[]).unwrap();
    assert_eq!(out.exit_code(), 2);
    assert!(out.fatal.is_some());
    assert!(out.output.join("manifest.json").is_file());
    assert_eq!(out.manifest.run.failures[0].stage, "ingest");
}

#[test]
fn hooks_see_a_valid_trace() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(
        dir.path(),
        r#"
[models.pop]
family = "mostpop"

[models.ease]
family = "ease"
space = { l2 = [10.0, 100.0, 1000.0] }
"#,
    );
    cfg.tuning.workers = 3;
    let recorder = EventRecorder::new();
    let out = run_train_pipeline(&cfg, &[&recorder]).unwrap();
    assert_eq!(out.exit_code(), 0);
    let events = recorder.events();
    validate_trace(&events).unwrap();
    let count = |s: Stage| events.iter().filter(|e| e.stage == s).count();
    assert_eq!(count(Stage::TrialStart), 4);
    assert_eq!(count(Stage::TrialEnd), 4);
    assert_eq!(events.first().unwrap().stage, Stage::Ingest);
    assert_eq!(events.last().unwrap().stage, Stage::Write);
    assert!(events
        .iter()
        .any(|e| e.stage == Stage::Evaluate && e.model.as_deref() == Some("ease")));
}

#[test]
fn configuration_errors_stop_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("untouched");
    let cases = [
        "[split]\nstrategy = \"holdout\"\nratios = [0.8, 0.2]\nseed = -1\n[models.p]\nfamily = \"mostpop\"\n",
        "[split]\nstrategy = \"holdout\"\nratios = [0.8, 0.2]\nfolds = 3\n[models.p]\nfamily = \"mostpop\"\n",
        &format!("{SPLIT}\n[models.p]\nfamily = \"deepfm\"\n"),
        &format!("{SPLIT}\n[models.p]\nfamily = \"ease\"\nparams = {{ l2 = -1.0 }}\n"),
        &format!("{SPLIT}\n[models.p]\nfamily = \"mostpop\"\n[tuning]\nmetric = \"nDCG\"\ncutoff = 0\n"),
    ];
    for body in cases {
        let path = common::write_config(dir.path(), "bad.toml", body);
        match ExperimentConfig::from_file(&path) {
            Err(e) => assert_eq!(e.exit_code(), 1, "{e}"),
            Ok(mut cfg) => {
                cfg.reporting.output = out.clone();
                let err = run_train_pipeline(&cfg, &[]).unwrap_err();
                assert!(matches!(err, PipelineError::Config(_)), "{err}");
            }
        }
    }
    let asha = config(
        dir.path(),
        r#"
[models.bpr]
family = "bprmf"
params = { factors = 4, learning_rate = 0.05 }
space = { regularization = [0.01, 0.1] }
scheduler = { kind = "asha", eta = 2, min_budget = 8, max_budget = 4 }
"#,
    );
    let mut asha = asha;
    asha.reporting.output = out.clone();
    assert!(matches!(run_train_pipeline(&asha, &[]), Err(PipelineError::Config(_))));
    assert!(!out.exists());
}

#[test]
fn tuned_winner_is_the_best_validation_trial() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(
        dir.path(),
        "[models.ease]\nfamily = \"ease\"\nspace = { l2 = [1.0, 100.0, 10000.0] }\n",
    );
    cfg.tuning.metric = AccuracyMetric::Recall;
    let out = run_train_pipeline(&cfg, &[]).unwrap();
    let study = &out.studies["ease"];
    let best = study.best_trial();
    assert!(study
        .trials
        .iter()
        .all(|t| t.metric().unwrap() <= best.metric().unwrap()));
    let params: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.output.join("best_params.json")).unwrap()).unwrap();
    assert_eq!(
        params["ease"]["params"]["l2"],
        serde_json::to_value(&best.config.to_params()["l2"]).unwrap()
    );
    assert_eq!(params["ease"]["trial_id"], best.trial_id);
    assert_eq!(params["ease"]["validation"]["metric"], "Recall@10");
}
