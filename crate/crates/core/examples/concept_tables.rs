//! Which concepts carry each emotion: frequency, attention and TF-IDF per category.

use emograph::analytics::{collect_observations, concept_table, Grouping};
use emograph::cli::render_concepts;
use emograph::ingestion::{generate_synthetic, split_dataset, PlantedRule, SyntheticConfig};
use emograph::training::{train, ModelConfig, TrainConfig};

fn main() -> emograph::Result<()> {
    let syn = SyntheticConfig {
        samples: 256,
        ..SyntheticConfig::default()
    };
    let ds = generate_synthetic(&syn, 5, PlantedRule::ObjectPair)?;
    let samples = ds.samples()?;
    let split = split_dataset(&samples, [1.0, 0.0, 0.0], 5)?;
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
        epochs: 40,
        ..TrainConfig::default()
    };
    let model = train(&split, &model_cfg, &cfg)?.model;

    let obs = collect_observations(&model, &samples, Grouping::Gold)?;
    let categories: Vec<usize> = (0..syn.classes).collect();
    print!("{}", render_concepts(&concept_table(&obs, &categories, 3)?));
    println!("planted key concepts: {:?}", ds.key_concepts());
    Ok(())
}
