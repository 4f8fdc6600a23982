use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

use super::embeddings::{embed_concepts, EmbeddingTable, Lookup};
use super::records::{DetectionRecord, SceneRecord, PAD_CONCEPT};

/// Dimensions of a dataset and its train/validation/test split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    /// Object slots per image.
    pub n: usize,
    /// Visual and scene feature width.
    pub d1: usize,
    /// Word-embedding width.
    pub d2: usize,
    pub classes: usize,
    pub split: [f64; 3],
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n: 10,
            d1: 2048,
            d2: 300,
            classes: 8,
            split: [0.8, 0.05, 0.15],
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d1 == 0 || self.d2 == 0 {
            return Err(Error::Config("n, d1 and d2 must be positive".into()));
        }
        if self.classes < 2 {
            return Err(Error::Config(format!(
                "need at least 2 classes, got {}",
                self.classes
            )));
        }
        check_fractions(&self.split)
    }
}

fn check_fractions(f: &[f64; 3]) -> Result<()> {
    if f.iter().any(|x| !(0.0..=1.0).contains(x)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions {f:?} must be in [0,1] and sum to 1"
        )));
    }
    Ok(())
}

/// One training example: object concepts, confidences, visual and semantic
/// node features, the scene feature and the label.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image_id: String,
    pub concepts: Vec<String>,
    pub confidences: Vec<f64>,
    /// `N x d1`
    pub visual: Matrix,
    /// `N x d2`
    pub semantic: Matrix,
    pub scene: Vec<f64>,
    pub label: usize,
}

impl Sample {
    pub fn node_count(&self) -> usize {
        self.confidences.len()
    }

    pub fn validate(&self, config: &DatasetConfig) -> Result<()> {
        let n = config.n;
        if self.visual.shape() != (n, config.d1) {
            return Err(Error::shape(
                "sample visual",
                (n, config.d1),
                self.visual.shape(),
            ));
        }
        if self.semantic.shape() != (n, config.d2) {
            return Err(Error::shape(
                "sample semantic",
                (n, config.d2),
                self.semantic.shape(),
            ));
        }
        if self.confidences.len() != n || self.concepts.len() != n {
            return Err(Error::shape(
                "sample slots",
                (n, 1),
                (self.confidences.len(), 1),
            ));
        }
        if self.scene.len() != config.d1 {
            return Err(Error::shape(
                "sample scene",
                (config.d1, 1),
                (self.scene.len(), 1),
            ));
        }
        if self.label >= config.classes {
            return Err(Error::Range {
                what: format!("label of {}", self.image_id),
                value: self.label as f64,
            });
        }
        Ok(())
    }

    /// Sample with only a scene feature; every object slot is empty.
    pub fn scene_only(scene: &SceneRecord, n: usize, d2: usize) -> Self {
        let d1 = scene.scene.len();
        Sample {
            image_id: scene.image_id.clone(),
            concepts: vec![PAD_CONCEPT.to_string(); n],
            confidences: vec![0.0; n],
            visual: Matrix::zeros(n, d1),
            semantic: Matrix::zeros(n, d2),
            scene: scene.scene.clone(),
            label: scene.label,
        }
    }

    /// Keeps the `k` most confident slots (original order preserved among
    /// them), or pads with empty slots when `k` exceeds the current count.
    pub fn with_node_count(&self, k: usize) -> Sample {
        let n = self.node_count();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            self.confidences[b]
                .total_cmp(&self.confidences[a])
                .then(a.cmp(&b))
        });
        let mut keep: Vec<usize> = order.into_iter().take(k).collect();
        keep.sort_unstable();

        let (d1, d2) = (self.visual.cols(), self.semantic.cols());
        let mut out = Sample {
            image_id: self.image_id.clone(),
            concepts: Vec::with_capacity(k),
            confidences: Vec::with_capacity(k),
            visual: Matrix::zeros(k, d1),
            semantic: Matrix::zeros(k, d2),
            scene: self.scene.clone(),
            label: self.label,
        };
        for (row, &src) in keep.iter().enumerate() {
            out.concepts.push(self.concepts[src].clone());
            out.confidences.push(self.confidences[src]);
            out.visual
                .row_mut(row)
                .copy_from_slice(self.visual.row(src));
            out.semantic
                .row_mut(row)
                .copy_from_slice(self.semantic.row(src));
        }
        while out.concepts.len() < k {
            out.concepts.push(PAD_CONCEPT.to_string());
            out.confidences.push(0.0);
        }
        out
    }

    /// Same sample with object slots reordered: new slot `i` is old slot `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Sample {
        Sample {
            image_id: self.image_id.clone(),
            concepts: perm.iter().map(|&p| self.concepts[p].clone()).collect(),
            confidences: perm.iter().map(|&p| self.confidences[p]).collect(),
            visual: self.visual.permute_rows(perm),
            semantic: self.semantic.permute_rows(perm),
            scene: self.scene.clone(),
            label: self.label,
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct BuildOptions {
    /// Map wholly unknown concepts to a zero vector and mark the slot inactive.
    pub allow_unknown: bool,
}

/// Joins detection records with the embedding table and, optionally, a
/// scene file (which takes precedence over a record's inline scene).
pub fn build_samples(
    records: &[DetectionRecord],
    table: &EmbeddingTable,
    scenes: Option<&[SceneRecord]>,
    options: BuildOptions,
) -> Result<Vec<Sample>> {
    let scene_map: HashMap<&str, &SceneRecord> = scenes
        .unwrap_or_default()
        .iter()
        .map(|s| (s.image_id.as_str(), s))
        .collect();
    let mut out = Vec::with_capacity(records.len());
    for rec in records {
        let scene = match (scene_map.get(rec.image_id.as_str()), &rec.scene) {
            (Some(s), _) => s.scene.clone(),
            (None, Some(s)) => s.clone(),
            (None, None) => {
                return Err(Error::Config(format!(
                    "no scene feature for image {:?}",
                    rec.image_id
                )))
            }
        };
        let (semantic, lookups) = embed_concepts(rec, table, options.allow_unknown)?;
        let rows: Vec<&[f64]> = rec.objects.iter().map(|o| o.visual.as_slice()).collect();
        let visual = Matrix::from_rows(&rows)?;
        let confidences = rec
            .objects
            .iter()
            .zip(&lookups)
            .map(|(o, l)| {
                if *l == Lookup::Known {
                    o.confidence
                } else {
                    0.0
                }
            })
            .collect();
        out.push(Sample {
            image_id: rec.image_id.clone(),
            concepts: rec.objects.iter().map(|o| o.concept.clone()).collect(),
            confidences,
            visual,
            semantic,
            scene,
            label: rec.label,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

/// Shuffled train/validation/test partition; sizes are rounded from the
/// fractions with the remainder going to test.
pub fn split_dataset<T: Clone>(items: &[T], fractions: [f64; 3], seed: u64) -> Result<Split<T>> {
    if items.is_empty() {
        return Err(Error::Empty("cannot split an empty dataset".into()));
    }
    check_fractions(&fractions)?;
    let n = items.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((fractions[0] * n as f64).round() as usize).min(n);
    let n_val = ((fractions[1] * n as f64).round() as usize).min(n - n_train);
    let pick = |r: &[usize]| r.iter().map(|&i| items[i].clone()).collect::<Vec<T>>();
    Ok(Split {
        train: pick(&idx[..n_train]),
        val: pick(&idx[n_train..n_train + n_val]),
        test: pick(&idx[n_train + n_val..]),
    })
}

/// Shuffled k-fold partition of `0..n`: returns the held-out indices of each fold.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > n {
        return Err(Error::Config(format!(
            "k-fold needs 2 <= k <= n, got k={k}, n={n}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::new(); k];
    for (pos, i) in idx.into_iter().enumerate() {
        folds[pos % k].push(i);
    }
    Ok(folds)
}
