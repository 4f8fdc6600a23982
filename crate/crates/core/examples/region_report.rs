//! Per-image explanation: detected objects ranked by attention.

use emograph::analytics::region_report;
use emograph::ingestion::{generate_synthetic, split_dataset, PlantedRule, SyntheticConfig};
use emograph::training::{train, ModelConfig, TrainConfig};

fn main() -> emograph::Result<()> {
    let syn = SyntheticConfig {
        samples: 128,
        ..SyntheticConfig::default()
    };
    let samples = generate_synthetic(&syn, 2, PlantedRule::ObjectPair)?.samples()?;
    let split = split_dataset(&samples, [1.0, 0.0, 0.0], 2)?;
    let model_cfg = ModelConfig {
        d1: syn.d1,
        d2: syn.d2,
        d_a: 16,
        classes: syn.classes,
        ..ModelConfig::default()
    };
    let cfg = TrainConfig {
        lr: 5e-3,
        decay_every: 0,
        epochs: 30,
        ..TrainConfig::default()
    };
    let model = train(&split, &model_cfg, &cfg)?.model;
    for s in samples.iter().take(2) {
        println!("{}", region_report(&model, s)?.to_text());
    }
    Ok(())
}
