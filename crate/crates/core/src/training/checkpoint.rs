//! Checkpoint container.
//!
//! A checkpoint is one JSON document:
//!
//! ```text
//! {
//!   "format": "emograph-checkpoint",
//!   "version": 1,
//!   "model": { ModelConfig },
//!   "mode": { AblationMode },
//!   "epoch": 12 | null,
//!   "metrics": { EpochMetrics } | null,
//!   "tensors": [ { "name": "W_e", "shape": [rows, cols], "data": [row-major floats] }, ... ]
//! }
//! ```
//!
//! Tensors appear in parameter order. Floats are written in shortest
//! round-trip form and parsed exactly, so save → load is bit-exact.
//! Optimizer moments are not stored.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_to_string, write_atomic};
use crate::numerics::{Matrix, Parameterized};

use super::model::{AblationMode, ModelConfig, SolverModel};
use super::trainer::EpochMetrics;

pub const CHECKPOINT_FORMAT: &str = "emograph-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub model: ModelConfig,
    pub mode: AblationMode,
    pub epoch: Option<usize>,
    pub metrics: Option<EpochMetrics>,
    pub tensors: Vec<TensorRecord>,
}

impl Checkpoint {
    pub fn from_model(
        model: &SolverModel,
        epoch: Option<usize>,
        metrics: Option<EpochMetrics>,
    ) -> Self {
        let tensors = model
            .param_names()
            .into_iter()
            .zip(model.params())
            .map(|(name, p)| TensorRecord {
                name,
                shape: [p.value.rows(), p.value.cols()],
                data: p.value.data().to_vec(),
            })
            .collect();
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            model: model.config.clone(),
            mode: model.mode,
            epoch,
            metrics,
            tensors,
        }
    }

    /// Rebuilds the model, checking every tensor's name and shape.
    pub fn to_model(&self) -> Result<SolverModel> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        let mut model = SolverModel::new(self.model.clone(), self.mode, 0)?;
        let names = model.param_names();
        if names.len() != self.tensors.len() {
            return Err(Error::Config(format!(
                "checkpoint has {} tensors, model needs {}",
                self.tensors.len(),
                names.len()
            )));
        }
        for ((name, p), rec) in names.iter().zip(model.params_mut()).zip(&self.tensors) {
            if *name != rec.name {
                return Err(Error::Config(format!(
                    "expected tensor {name}, found {}",
                    rec.name
                )));
            }
            let value = Matrix::from_vec(rec.shape[0], rec.shape[1], rec.data.clone())?;
            if value.shape() != p.value.shape() {
                return Err(Error::Config(format!(
                    "tensor {name} has shape {:?}, model needs {:?}",
                    value.shape(),
                    p.value.shape()
                )));
            }
            if !value.is_finite() {
                return Err(Error::Numeric(format!("non-finite values in {name}")));
            }
            p.value = value;
        }
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn save_checkpoint(
    path: &Path,
    model: &SolverModel,
    epoch: Option<usize>,
    metrics: Option<EpochMetrics>,
) -> Result<()> {
    let json = Checkpoint::from_model(model, epoch, metrics).to_json()?;
    write_atomic(path, json.as_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<(SolverModel, Checkpoint)> {
    let ckpt = Checkpoint::from_json(&read_to_string(path)?)?;
    Ok((ckpt.to_model()?, ckpt))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> SolverModel {
        let cfg = ModelConfig {
            d1: 5,
            d2: 4,
            d_a: 3,
            layers: 2,
            classes: 3,
            ..ModelConfig::default()
        };
        SolverModel::new(cfg, AblationMode::FULL, 21).unwrap()
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let m = model();
        let ckpt = Checkpoint::from_model(&m, Some(3), None);
        let back = Checkpoint::from_json(&ckpt.to_json().unwrap()).unwrap();
        assert_eq!(back, ckpt);
        let restored = back.to_model().unwrap();
        for (a, b) in m.params().iter().zip(restored.params()) {
            let bits = |x: &Matrix| x.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.value), bits(&b.value));
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested").join("model.json");
        let m = model();
        save_checkpoint(&path, &m, None, None).unwrap();
        let (restored, ckpt) = load_checkpoint(&path).unwrap();
        assert_eq!(restored, m);
        assert_eq!(ckpt.epoch, None);
    }

    #[test]
    fn tampered_shape_is_rejected() {
        let mut ckpt = Checkpoint::from_model(&model(), None, None);
        ckpt.tensors[0].shape = [1, 25];
        assert!(ckpt.to_model().is_err());
        let mut ckpt = Checkpoint::from_model(&model(), None, None);
        ckpt.tensors.swap(0, 2);
        assert!(ckpt.to_model().is_err());
    }
}
