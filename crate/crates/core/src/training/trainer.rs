use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingestion::{Sample, Split};
use crate::io::write_atomic;
use crate::numerics::Parameterized;

use super::forward::{forward, sample_gradient};
use super::model::{AblationMode, ModelConfig, ModelGrads, SolverModel};
use super::optim::{adam_step, lr_schedule, AdamConfig};

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "EMOGRAPH_THREADS";

/// Samples per gradient chunk. Fixed so the reduction order never depends
/// on the thread count.
const CHUNK: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub mode: AblationMode,
    /// Worker threads; `None` reads [`THREADS_ENV`], then uses all cores.
    pub threads: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 5e-5,
            weight_decay: 5e-5,
            decay_factor: 0.1,
            decay_every: 5,
            epochs: 50,
            batch_size: 32,
            seed: 0,
            mode: AblationMode::FULL,
            threads: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Range {
                what: "lr".into(),
                value: self.lr,
            });
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Range {
                what: "weight decay".into(),
                value: self.weight_decay,
            });
        }
        self.mode.validate()
    }

    fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: Option<f64>,
}

pub struct TrainOutcome {
    /// Parameters from the best epoch (validation accuracy, or training
    /// accuracy without a validation set; earliest epoch on ties).
    pub model: SolverModel,
    pub best_epoch: Option<usize>,
    pub metrics: Vec<EpochMetrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub count: usize,
    /// `None` for classes absent from the evaluated set.
    pub per_class: Vec<Option<f64>>,
    /// `confusion[gold][predicted]`
    pub confusion: Vec<Vec<usize>>,
    pub mean_loss: f64,
}

pub(crate) fn thread_count(explicit: Option<usize>) -> usize {
    explicit
        .or_else(|| {
            std::env::var(THREADS_ENV)
                .ok()
                .and_then(|v| v.trim().parse().ok())
        })
        .filter(|&n| n > 0)
        .unwrap_or(0)
}

pub(crate) fn with_pool<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count(threads))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

pub fn evaluate(model: &SolverModel, samples: &[Sample]) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::Empty("evaluation set".into()));
    }
    let c = model.config.classes;
    let results = samples
        .par_iter()
        .map(|s| {
            let f = forward(model, s)?;
            Ok((s.label, f.predicted(), f.loss(s.label)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut confusion = vec![vec![0usize; c]; c];
    let mut loss = 0.0;
    for &(gold, pred, l) in &results {
        if gold >= c {
            return Err(Error::Range {
                what: "label".into(),
                value: gold as f64,
            });
        }
        confusion[gold][pred] += 1;
        loss += l;
    }
    let correct: usize = (0..c).map(|k| confusion[k][k]).sum();
    let per_class = confusion
        .iter()
        .enumerate()
        .map(|(k, row)| {
            let total: usize = row.iter().sum();
            (total > 0).then(|| row[k] as f64 / total as f64)
        })
        .collect();
    Ok(Evaluation {
        accuracy: correct as f64 / samples.len() as f64,
        count: samples.len(),
        per_class,
        confusion,
        mean_loss: loss / samples.len() as f64,
    })
}

/// Mean-loss gradient of one minibatch, written into the model's gradient
/// buffers. Returns `(summed loss, correct predictions)`.
pub fn batch_gradient(model: &mut SolverModel, batch: &[&Sample]) -> Result<(f64, usize)> {
    let scale = 1.0 / batch.len() as f64;
    let frozen: &SolverModel = model;
    let partials = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grads = ModelGrads::zeros_like(frozen);
            let mut loss = 0.0;
            let mut correct = 0;
            for s in chunk {
                let (l, pred) = sample_gradient(frozen, s, scale, &mut grads)?;
                if !l.is_finite() {
                    return Err(Error::Numeric(format!("non-finite loss on {}", s.image_id)));
                }
                loss += l;
                correct += usize::from(pred == s.label);
            }
            Ok((grads, loss, correct))
        })
        .collect::<Result<Vec<_>>>()?;
    model.zero_grad();
    let mut loss = 0.0;
    let mut correct = 0;
    for (grads, l, c) in &partials {
        model.accumulate(grads, 1.0)?;
        loss += l;
        correct += c;
    }
    Ok((loss, correct))
}

pub fn train(
    data: &Split<Sample>,
    model_config: &ModelConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let model = SolverModel::new(model_config.clone(), config.mode, config.seed)?;
    train_from(model, data, config)
}

/// Continues training an existing model.
pub fn train_from(
    mut model: SolverModel,
    data: &Split<Sample>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if config.epochs > 0 && data.train.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    with_pool(config.threads, move || {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        let mut order: Vec<usize> = (0..data.train.len()).collect();
        let mut metrics = Vec::with_capacity(config.epochs);
        let mut best: Option<(f64, usize, SolverModel)> = None;
        let mut step = 0u64;
        for epoch in 0..config.epochs {
            let lr = lr_schedule(config.lr, config.decay_factor, config.decay_every, epoch);
            let adam = config.adam(lr);
            order.shuffle(&mut rng);
            let mut loss_sum = 0.0;
            for (b, idx) in order.chunks(config.batch_size).enumerate() {
                let batch: Vec<&Sample> = idx.iter().map(|&i| &data.train[i]).collect();
                let (loss, _) = batch_gradient(&mut model, &batch).map_err(|e| match e {
                    Error::Numeric(m) => Error::Numeric(format!("epoch {epoch}, batch {b}: {m}")),
                    other => other,
                })?;
                loss_sum += loss;
                step += 1;
                adam_step(&mut model, &adam, step)?;
            }
            if !model.params().iter().all(|p| p.value.is_finite()) {
                return Err(Error::Numeric(format!(
                    "parameters diverged in epoch {epoch}"
                )));
            }
            let train_acc = evaluate(&model, &data.train)?.accuracy;
            let val_acc = if data.val.is_empty() {
                None
            } else {
                Some(evaluate(&model, &data.val)?.accuracy)
            };
            let m = EpochMetrics {
                epoch,
                lr,
                train_loss: loss_sum / data.train.len() as f64,
                train_acc,
                val_acc,
            };
            log::info!(
                "epoch {epoch} lr {lr:.3e} loss {:.4} train {:.3} val {}",
                m.train_loss,
                train_acc,
                val_acc.map_or("-".into(), |v| format!("{v:.3}"))
            );
            let score = val_acc.unwrap_or(train_acc);
            if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
                best = Some((score, epoch, model.clone()));
            }
            metrics.push(m);
        }
        let (best_epoch, model) = match best {
            Some((_, e, m)) => (Some(e), m),
            None => (None, model),
        };
        Ok(TrainOutcome {
            model,
            best_epoch,
            metrics,
        })
    })?
}

/// One JSON object per line.
pub fn write_metrics_log(path: &Path, metrics: &[EpochMetrics]) -> Result<()> {
    let mut out = String::new();
    for m in metrics {
        out.push_str(&serde_json::to_string(m)?);
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}
