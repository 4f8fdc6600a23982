#![allow(dead_code)]

use emograph::ingestion::Sample;
use emograph::numerics::Matrix;
use emograph::training::{AblationMode, ModelConfig, SolverModel};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rand_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_vec(
        r,
        c,
        (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

pub fn small_config() -> ModelConfig {
    ModelConfig {
        d1: 8,
        d2: 5,
        d_a: 4,
        layers: 3,
        classes: 3,
        ..ModelConfig::default()
    }
}

pub fn small_model(seed: u64, mode: AblationMode) -> SolverModel {
    SolverModel::new(small_config(), mode, seed).unwrap()
}

/// Random sample; roughly a third of the slots fall below the threshold and
/// some sit exactly on it.
pub fn random_sample(rng: &mut ChaCha8Rng, n: usize, cfg: &ModelConfig, id: usize) -> Sample {
    let confidences = (0..n)
        .map(|_| match rng.random_range(0..6) {
            0 => 0.3,
            1 | 2 => rng.random_range(0.0..0.3),
            _ => rng.random_range(0.3..1.0),
        })
        .collect();
    Sample {
        image_id: format!("r{id}"),
        concepts: (0..n).map(|i| format!("c{i}")).collect(),
        confidences,
        visual: rand_matrix(rng, n, cfg.d1),
        semantic: rand_matrix(rng, n, cfg.d2),
        scene: (0..cfg.d1).map(|_| rng.random_range(-1.0..1.0)).collect(),
        label: rng.random_range(0..cfg.classes),
    }
}

pub fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}
