//! Desk-scale datasets with a planted labelling rule.
//!
//! Under [`PlantedRule::ObjectPair`] every class owns a pair of key concepts
//! and adjacent classes share one key, so no single object identifies the
//! class while the pair does. Each image also carries unrelated distractor
//! objects and low-confidence decoys drawn from other classes' keys.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::dataset::{build_samples, BuildOptions, DatasetConfig, Sample};
use super::embeddings::EmbeddingTable;
use super::records::{DetectionRecord, ObjectSlot, SceneRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlantedRule {
    /// Label is the scene cluster; objects carry no label information.
    SceneCluster,
    /// Label is fixed by a co-occurring pair of key objects.
    ObjectPair,
}

impl std::str::FromStr for PlantedRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scene-cluster" => Ok(PlantedRule::SceneCluster),
            "object-pair" => Ok(PlantedRule::ObjectPair),
            other => Err(Error::Config(format!(
                "unknown planted rule {other:?} (expected scene-cluster or object-pair)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n: usize,
    pub d1: usize,
    pub d2: usize,
    pub classes: usize,
    pub samples: usize,
    /// Standard deviation of the Gaussian noise added to visual and scene features.
    pub noise: f64,
    pub distractor_concepts: usize,
    /// Probability that the scene cluster agrees with the label under `ObjectPair`.
    pub scene_agreement: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n: 10,
            d1: 32,
            d2: 16,
            classes: 4,
            samples: 512,
            noise: 0.3,
            distractor_concepts: 8,
            scene_agreement: 0.5,
        }
    }
}

impl SyntheticConfig {
    pub fn dataset_config(&self) -> DatasetConfig {
        DatasetConfig {
            n: self.n,
            d1: self.d1,
            d2: self.d2,
            classes: self.classes,
            ..DatasetConfig::default()
        }
    }

    fn validate(&self, rule: PlantedRule) -> Result<()> {
        self.dataset_config().validate()?;
        if rule == PlantedRule::ObjectPair && self.n < 2 {
            return Err(Error::Config(
                "object-pair rule needs at least 2 slots".into(),
            ));
        }
        if self.distractor_concepts == 0 {
            return Err(Error::Config("need at least one distractor concept".into()));
        }
        if !(0.0..=1.0).contains(&self.scene_agreement) || self.noise < 0.0 {
            return Err(Error::Config(
                "scene_agreement must be in [0,1], noise >= 0".into(),
            ));
        }
        Ok(())
    }
}

const KEY_NAMES: [&str; 8] = [
    "balloon", "cake", "cliff", "ocean", "spider", "grave", "fire", "crowd",
];
const DISTRACTOR_NAMES: [&str; 8] = [
    "man", "woman", "tree", "building", "car", "sky", "table", "window",
];

fn key_name(i: usize) -> String {
    KEY_NAMES
        .get(i)
        .map_or_else(|| format!("key{i}"), |s| s.to_string())
}

fn distractor_name(i: usize) -> String {
    DISTRACTOR_NAMES
        .get(i)
        .map_or_else(|| format!("thing{i}"), |s| s.to_string())
}

/// Files-equivalent output of the generator.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    pub config: SyntheticConfig,
    pub rule: PlantedRule,
    pub records: Vec<DetectionRecord>,
    pub scenes: Vec<SceneRecord>,
    pub table: EmbeddingTable,
}

impl SyntheticDataset {
    /// Runs the records through the regular ingestion path.
    pub fn samples(&self) -> Result<Vec<Sample>> {
        build_samples(
            &self.records,
            &self.table,
            Some(&self.scenes),
            BuildOptions::default(),
        )
    }

    pub fn key_concepts(&self) -> Vec<String> {
        (0..self.config.classes).map(key_name).collect()
    }
}

fn gaussian(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn noisy(rng: &mut ChaCha8Rng, base: &[f64], noise: f64) -> Vec<f64> {
    base.iter()
        .map(|b| b + noise * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

pub fn generate_synthetic(
    config: &SyntheticConfig,
    seed: u64,
    rule: PlantedRule,
) -> Result<SyntheticDataset> {
    config.validate(rule)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = config.classes;

    let concepts: Vec<String> = (0..c)
        .map(key_name)
        .chain((0..config.distractor_concepts).map(distractor_name))
        .collect();
    let mut table = EmbeddingTable::new(config.d2);
    let mut prototypes = Vec::with_capacity(concepts.len());
    for name in &concepts {
        table.insert(name.clone(), gaussian(&mut rng, config.d2, 1.0))?;
        prototypes.push(gaussian(&mut rng, config.d1, 1.0));
    }
    let centroids: Vec<Vec<f64>> = (0..c).map(|_| gaussian(&mut rng, config.d1, 1.0)).collect();

    let slot = |rng: &mut ChaCha8Rng, concept: usize, confidence: f64| ObjectSlot {
        concept: concepts[concept].clone(),
        confidence,
        visual: noisy(rng, &prototypes[concept], config.noise),
        attribute: None,
    };

    let mut records = Vec::with_capacity(config.samples);
    let mut scenes = Vec::with_capacity(config.samples);
    for idx in 0..config.samples {
        let label = rng.random_range(0..c);
        let (cluster, mut objects) = match rule {
            PlantedRule::SceneCluster => {
                let objects = (0..config.n)
                    .map(|_| {
                        let concept = rng.random_range(0..concepts.len());
                        let conf = rng.random_range(0.0..1.0);
                        slot(&mut rng, concept, conf)
                    })
                    .collect::<Vec<_>>();
                (label, objects)
            }
            PlantedRule::ObjectPair => {
                let mut objects = Vec::with_capacity(config.n);
                for key in [label, (label + 1) % c] {
                    let conf = rng.random_range(0.5..=1.0);
                    objects.push(slot(&mut rng, key, conf));
                }
                let max_distractors = (config.n - 2).min(4);
                let n_distractors = if max_distractors == 0 {
                    0
                } else {
                    rng.random_range(1..=max_distractors)
                };
                for _ in 0..n_distractors {
                    let concept = c + rng.random_range(0..config.distractor_concepts);
                    let conf = rng.random_range(0.3..=1.0);
                    objects.push(slot(&mut rng, concept, conf));
                }
                let decoys: Vec<usize> = (0..c)
                    .filter(|&k| k != label && k != (label + 1) % c)
                    .collect();
                while objects.len() < config.n {
                    let concept = match decoys.choose(&mut rng) {
                        Some(&k) => k,
                        None => c + rng.random_range(0..config.distractor_concepts),
                    };
                    let conf = rng.random_range(0.0..0.29);
                    objects.push(slot(&mut rng, concept, conf));
                }
                let cluster = if rng.random_bool(config.scene_agreement) {
                    label
                } else {
                    rng.random_range(0..c)
                };
                (cluster, objects)
            }
        };
        objects.shuffle(&mut rng);
        let image_id = format!("syn_{idx:05}");
        let scene = noisy(&mut rng, &centroids[cluster], config.noise);
        scenes.push(SceneRecord {
            image_id: image_id.clone(),
            label,
            scene: scene.clone(),
        });
        records.push(DetectionRecord {
            image_id,
            label,
            scene: Some(scene),
            objects,
        });
    }

    Ok(SyntheticDataset {
        config: config.clone(),
        rule,
        records,
        scenes,
        table,
    })
}
