//! Design pipeline on fixed parameters, then the eval pipeline re-scoring its checkpoints.

use std::path::PathBuf;

use warpbench::eval::AccuracyMetric;
use warpbench::pipeline::{eval_output_dir, run_design_pipeline, run_eval_pipeline, ExperimentConfig};
use warpbench::report::verify_artifacts;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/configs/design.toml");
    let cfg = ExperimentConfig::from_file(&path)?;

    let design = run_design_pipeline(&cfg, &[])?;
    let eval = run_eval_pipeline(&cfg, &[])?;
    assert_eq!(eval.output, eval_output_dir(&cfg));

    for (name, trained) in &design.reports {
        let rescored = &eval.reports[name];
        for (a, b) in trained.accuracy.iter().zip(&rescored.accuracy) {
            assert_eq!(a.per_user, b.per_user);
        }
        println!(
            "{name:<8} nDCG@10 {:.4} from training, identical after reload",
            trained.get(AccuracyMetric::Ndcg, 10).unwrap().mean
        );
    }
    let sig = std::fs::read_to_string(design.output.join("stats/significance.tsv"))?;
    println!("\n{}", sig.lines().take(6).collect::<Vec<_>>().join("\n"));

    let m = verify_artifacts(&design.output)?;
    println!(
        "\n{} artifacts verified under {}",
        m.artifacts.len(),
        design.output.display()
    );
    Ok(())
}
