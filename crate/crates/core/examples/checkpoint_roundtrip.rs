//! Save a trained model, load it back and confirm identical scores.

use std::path::PathBuf;

use warpbench::ingest::{build_dataset, load_interactions, DedupPolicy, Schema};
use warpbench::models::{fit, load_checkpoint, recommend, save_checkpoint, Deadline, Family, ModelConfig, ParamValue};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/data/ratings.tsv");
    let data = build_dataset(
        load_interactions(&path, &Schema::default())?.records,
        DedupPolicy::default(),
    )?;
    let cfg = ModelConfig::from_params(
        Family::BprMf,
        &[
            ("factors".to_string(), ParamValue::Int(8)),
            ("learning_rate".to_string(), ParamValue::Real(0.05)),
            ("epochs".to_string(), ParamValue::Int(5)),
        ]
        .into(),
    )?;
    let model = fit(&cfg, &data, 3, &Deadline::none())?;

    let dir = tempfile::tempdir()?;
    let file = dir.path().join("bpr.wbck");
    save_checkpoint(&model, &file)?;
    println!("wrote {} ({} bytes)", file.display(), std::fs::metadata(&file)?.len());

    let back = load_checkpoint(&file, Some(&data.id_maps_digest()))?;
    let users: Vec<u32> = (0..data.n_users() as u32).collect();
    assert_eq!(
        recommend(&model, &users, 10, true)?,
        recommend(&back, &users, 10, true)?
    );
    println!("reloaded model ranks all {} users identically", users.len());

    match load_checkpoint(&file, Some("not-the-digest")) {
        Err(e) => println!("wrong id maps rejected: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
