//! Generate a synthetic corpus, write it in the on-disk formats and read it back.
//!
//! `cargo run --example synthetic_dataset -- /tmp/emo-data`

use std::path::PathBuf;

use emograph::ingestion::{
    build_samples, generate_synthetic, load_detections, load_scenes, write_detections,
    write_scenes, BuildOptions, EmbeddingTable, PlantedRule, SyntheticConfig,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).map_or_else(
        || std::env::temp_dir().join("emograph-synth"),
        PathBuf::from,
    );
    std::fs::create_dir_all(&dir)?;

    let cfg = SyntheticConfig {
        samples: 64,
        ..SyntheticConfig::default()
    };
    let ds = generate_synthetic(&cfg, 1, PlantedRule::ObjectPair)?;
    write_detections(&dir.join("detections.jsonl"), &ds.records)?;
    write_scenes(&dir.join("scenes.jsonl"), &ds.scenes)?;
    ds.table.save(&dir.join("embeddings.txt"))?;

    let records = load_detections(&dir.join("detections.jsonl"), cfg.n, cfg.d1)?;
    let scenes = load_scenes(&dir.join("scenes.jsonl"), cfg.d1)?;
    let table = EmbeddingTable::load(&dir.join("embeddings.txt"), Some(cfg.d2))?;
    let samples = build_samples(&records, &table, Some(&scenes), BuildOptions::default())?;

    println!("wrote {} images to {}", samples.len(), dir.display());
    println!(
        "vocabulary: {} concepts, key concepts {:?}",
        table.len(),
        ds.key_concepts()
    );
    let s = &samples[0];
    println!(
        "{}: label {}, concepts {:?}",
        s.image_id, s.label, s.concepts
    );
    println!(
        "confidences {:?}",
        s.confidences
            .iter()
            .map(|p| format!("{p:.2}"))
            .collect::<Vec<_>>()
    );
    Ok(())
}
