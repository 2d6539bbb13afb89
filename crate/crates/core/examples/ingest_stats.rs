//! Load a ratings file, remap IDs and print dataset statistics.
//!
//! `cargo run --example ingest_stats [path]`

use std::path::PathBuf;

use warpbench::ingest::{compute_stats, load_id_list, load_interactions, Column, DatasetBuilder, DedupPolicy, Schema};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/data");
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or(dir.join("ratings.tsv"));

    let schema = Schema::tsv(&[Column::User, Column::Item, Column::Rating, Column::Timestamp]);
    let loaded = load_interactions(&path, &schema)?;
    println!("rows read: {} (skipped {})", loaded.records.len(), loaded.skipped_rows);

    // the catalog lists every item, including ones nobody rated
    let catalog = load_id_list(&dir.join("titles.tsv"), "\t", 0, false)?;
    let dataset = DatasetBuilder::new(DedupPolicy::KeepLastByTimestamp)
        .with_item_catalog(&catalog)
        .build(loaded.records)?;

    let stats = compute_stats(&dataset);
    println!("users        {}", stats.n_users);
    println!("items        {}", stats.n_items);
    println!("interactions {}", stats.n_interactions);
    println!("sparsity     {:.4}", stats.sparsity);
    println!("id digest    {}", dataset.id_maps_digest());

    let degrees = dataset.user_degrees();
    let (lo, hi) = (degrees.iter().min().unwrap(), degrees.iter().max().unwrap());
    println!("profile length min {lo} max {hi}");
    let first = dataset.user_map().raw(0).unwrap();
    println!("user {first} has {} interactions", dataset.user_items(0).len());
    Ok(())
}
