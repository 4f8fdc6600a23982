//! Train the full model on a planted-rule corpus, save a checkpoint, reload it
//! and evaluate on the held-out split.

use emograph::ingestion::{generate_synthetic, split_dataset, PlantedRule, SyntheticConfig};
use emograph::training::{
    evaluate, load_checkpoint, save_checkpoint, train, AblationMode, ModelConfig, TrainConfig,
};

fn main() -> emograph::Result<()> {
    let syn = SyntheticConfig::default();
    let samples = generate_synthetic(&syn, 7, PlantedRule::ObjectPair)?.samples()?;
    let split = split_dataset(&samples, [0.8, 0.05, 0.15], 7)?;
    let model_cfg = ModelConfig {
        d1: syn.d1,
        d2: syn.d2,
        d_a: 16,
        classes: syn.classes,
        ..ModelConfig::default()
    };
    // the small corpus needs a larger step than the default schedule
    let train_cfg = TrainConfig {
        lr: 5e-3,
        decay_every: 50,
        epochs: 100,
        seed: 7,
        mode: AblationMode::FULL,
        ..TrainConfig::default()
    };
    let out = train(&split, &model_cfg, &train_cfg)?;
    for m in out.metrics.iter().step_by(10) {
        println!(
            "epoch {:>3}  loss {:.4}  train {:.3}",
            m.epoch, m.train_loss, m.train_acc
        );
    }

    let path = std::env::temp_dir().join("emograph-example-checkpoint.json");
    save_checkpoint(&path, &out.model, out.best_epoch, None)?;
    let (reloaded, _) = load_checkpoint(&path)?;
    let ev = evaluate(&reloaded, &split.test)?;
    println!(
        "best epoch {:?}, held-out accuracy {:.3}",
        out.best_epoch, ev.accuracy
    );
    println!("confusion {:?}", ev.confusion);
    Ok(())
}
