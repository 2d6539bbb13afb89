//! The full train pipeline driven by `examples/configs/train.toml`, with a stage hook.
//!
//! `cargo run --release --example pipeline_train [config]`

use std::path::PathBuf;

use warpbench::pipeline::{run_train_pipeline, validate_trace, EventRecorder, ExperimentConfig, PipelineEvent, Stage};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/configs/train.toml"));
    let cfg = ExperimentConfig::from_file(&config)?;

    let printer = |e: &PipelineEvent| {
        if !matches!(e.stage, Stage::TrialStart) {
            let who = e.model.as_deref().map(|m| format!(" {m}")).unwrap_or_default();
            println!("[{}{who}] {}", e.stage.name(), e.summary);
        }
    };
    let recorder = EventRecorder::new();
    let outcome = run_train_pipeline(&cfg, &[&printer, &recorder])?;
    validate_trace(&recorder.events())?;

    println!();
    for (name, study) in &outcome.studies {
        let best = study.best_trial();
        println!(
            "{name}: {} trials, {} epochs, best {:?}",
            study.trials.len(),
            study.total_epochs(),
            best.config
        );
    }
    for (name, r) in &outcome.reports {
        let cells: Vec<String> = r
            .accuracy
            .iter()
            .filter(|m| m.k == 10)
            .map(|m| format!("{}={:.4}", m.label(), m.mean))
            .collect();
        println!("{name:<8} {}", cells.join(" "));
    }
    println!(
        "artifacts in {} (exit code {})",
        outcome.output.display(),
        outcome.exit_code()
    );
    Ok(())
}
