//! Train a handful of ablation variants on the same split and compare them.

use emograph::ingestion::{generate_synthetic, split_dataset, PlantedRule, SyntheticConfig};
use emograph::training::{evaluate, train, ModelConfig, TrainConfig, ABLATION_ROWS};

fn main() -> emograph::Result<()> {
    let syn = SyntheticConfig {
        samples: 256,
        ..SyntheticConfig::default()
    };
    let samples = generate_synthetic(&syn, 11, PlantedRule::ObjectPair)?.samples()?;
    let split = split_dataset(&samples, [0.8, 0.0, 0.2], 11)?;
    let model_cfg = ModelConfig {
        d1: syn.d1,
        d2: syn.d2,
        d_a: 16,
        classes: syn.classes,
        ..ModelConfig::default()
    };
    let picks = [
        "single-object",
        "multi-object",
        "scene",
        "scene-attention",
        "full",
    ];
    for (slug, description, mode) in ABLATION_ROWS.iter().filter(|r| picks.contains(&r.0)) {
        let cfg = TrainConfig {
            lr: 5e-3,
            decay_every: 0,
            epochs: 60,
            mode: *mode,
            ..TrainConfig::default()
        };
        let out = train(&split, &model_cfg, &cfg)?;
        let acc = evaluate(&out.model, &split.test)?.accuracy;
        println!("{slug:<16} {:>6.1}%  {description}", 100.0 * acc);
    }
    Ok(())
}
