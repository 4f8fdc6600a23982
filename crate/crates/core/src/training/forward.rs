use crate::error::{Error, Result};
use crate::fusion::{fuse_backward, fuse_forward, FusionCache, Pooling};
use crate::gcn::{reason_backward, reason_with_cache, GcnCache};
use crate::graph::{build_graph_with, graph_backward, kept_slots, EmotionGraph, GraphCache};
use crate::ingestion::Sample;
use crate::numerics::{softmax, Matrix};

use super::model::{ModelGrads, SolverModel};

/// Probabilities are clamped here before the log.
pub const PROB_FLOOR: f64 = 1e-12;

struct ObjectPath {
    graph: Option<(EmotionGraph, GraphCache, GcnCache)>,
    active: Vec<bool>,
    reasoned: Matrix,
    fusion: FusionCache,
}

/// One sample's forward result plus what the backward pass needs.
pub struct Forward {
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    /// Per-slot pooling weights; empty when objects are unused.
    pub attention: Vec<f64>,
    /// Slots that took part in pooling.
    pub active: Vec<bool>,
    /// Classifier input `[f_sce ∥ f_obj]` (either part may be absent).
    pub features: Vec<f64>,
    objects: Option<ObjectPath>,
}

impl Forward {
    pub fn predicted(&self) -> usize {
        argmax(&self.probs)
    }

    /// Cross-entropy against `label`.
    pub fn loss(&self, label: usize) -> Result<f64> {
        let p = *self.probs.get(label).ok_or_else(|| Error::Range {
            what: "label".into(),
            value: label as f64,
        })?;
        Ok(-p.max(PROB_FLOOR).ln())
    }
}

/// Index of the largest value, first one on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn zero_inactive(m: &Matrix, active: &[bool]) -> Matrix {
    let mut out = m.clone();
    for (i, &a) in active.iter().enumerate() {
        if !a {
            out.row_mut(i).fill(0.0);
        }
    }
    out
}

pub fn forward(model: &SolverModel, sample: &Sample) -> Result<Forward> {
    let mode = model.mode;
    let cfg = &model.config;
    if sample.scene.len() != cfg.d1 {
        return Err(Error::shape("scene", (sample.scene.len(), 1), (cfg.d1, 1)));
    }
    let mut features = Vec::with_capacity(mode.classifier_input(cfg.d1, cfg.d2));
    if mode.use_scene {
        features.extend_from_slice(&sample.scene);
    }
    let mut attention = Vec::new();
    let mut active_out = Vec::new();
    let objects = if mode.use_objects {
        if sample.semantic.cols() != cfg.d2 {
            return Err(Error::shape(
                "semantic",
                sample.semantic.shape(),
                (sample.node_count(), cfg.d2),
            ));
        }
        let options = mode.graph_options();
        let (graph, active, reasoned) = if mode.use_gcn {
            let (graph, gcache) = build_graph_with(sample, &model.graph, &options)?;
            let (reasoned, ncache) =
                reason_with_cache(&graph.nodes, &graph.masked_affinity, &model.gcn)?;
            let active = graph.active.clone();
            (Some((graph, gcache, ncache)), active, reasoned)
        } else {
            let active = kept_slots(&sample.confidences, model.graph.tau, &options);
            let nodes = zero_inactive(&sample.semantic, &active);
            (None, active, nodes)
        };
        let pooling = if mode.use_attention {
            Pooling::Attention {
                normalized: cfg.normalize_attention,
            }
        } else {
            Pooling::Mean
        };
        let (f_obj, weights, fusion) =
            fuse_forward(&sample.scene, &reasoned, &active, &model.fusion, pooling)?;
        features.extend_from_slice(&f_obj);
        attention = weights;
        active_out = active.clone();
        Some(ObjectPath {
            graph,
            active,
            reasoned,
            fusion,
        })
    } else {
        None
    };
    let logits = model.classifier.w.value.matvec(&features)?;
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite logits for {}",
            sample.image_id
        )));
    }
    let probs = softmax(&logits);
    Ok(Forward {
        logits,
        probs,
        attention,
        active: active_out,
        features,
        objects,
    })
}

/// Adds `scale · ∂loss/∂θ` for one sample into `grads`.
pub fn backward(
    model: &SolverModel,
    sample: &Sample,
    fwd: &Forward,
    scale: f64,
    grads: &mut ModelGrads,
) -> Result<()> {
    let label = sample.label;
    if label >= fwd.probs.len() {
        return Err(Error::Range {
            what: "label".into(),
            value: label as f64,
        });
    }
    let mut dz = fwd.probs.clone();
    dz[label] -= 1.0;
    dz.iter_mut().for_each(|g| *g *= scale);
    grads.classifier.add_outer(1.0, &dz, &fwd.features)?;

    let Some(path) = &fwd.objects else {
        return Ok(());
    };
    let d_features = model.classifier.w.value.matvec_t(&dz)?;
    let offset = if model.mode.use_scene {
        model.config.d1
    } else {
        0
    };
    let d_f_obj = &d_features[offset..];
    let (d_reasoned, _) = fuse_backward(
        &path.fusion,
        &sample.scene,
        &path.reasoned,
        &path.active,
        &model.fusion,
        d_f_obj,
        &mut grads.fusion,
    )?;
    if let Some((graph, gcache, ncache)) = &path.graph {
        let (_, d_aff) = reason_backward(
            ncache,
            &graph.masked_affinity,
            &model.gcn,
            &d_reasoned,
            &mut grads.gcn,
        )?;
        graph_backward(
            graph,
            gcache,
            sample,
            &model.graph,
            &d_aff,
            &mut grads.graph,
        )?;
    }
    Ok(())
}

/// Forward and backward for one sample; returns the loss.
pub fn sample_gradient(
    model: &SolverModel,
    sample: &Sample,
    scale: f64,
    grads: &mut ModelGrads,
) -> Result<(f64, usize)> {
    let fwd = forward(model, sample)?;
    let loss = fwd.loss(sample.label)?;
    backward(model, sample, &fwd, scale, grads)?;
    Ok((loss, fwd.predicted()))
}

/// Mean cross-entropy over `samples`.
pub fn batch_loss(model: &SolverModel, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("batch".into()));
    }
    let mut total = 0.0;
    for s in samples {
        total += forward(model, s)?.loss(s.label)?;
    }
    Ok(total / samples.len() as f64)
}
