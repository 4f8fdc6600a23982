//! Scene-guided attention over reasoned object features, fusion and
//! concatenation with the scene feature.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{
    axpy, dot, l2_normalize, l2_normalize_adjoint, sigmoid, sigmoid_grad_from_output, Matrix,
    ParamTensor, NORM_EPS,
};

#[derive(Clone, Debug, PartialEq)]
pub struct FusionParams {
    /// Scene projection, `d2 x d1`.
    pub w_s: ParamTensor,
    /// Object projection, `d2 x d2`.
    pub w_o: ParamTensor,
}

impl FusionParams {
    pub fn init<R: Rng + ?Sized>(d1: usize, d2: usize, rng: &mut R) -> Self {
        FusionParams {
            w_s: ParamTensor::uniform(d2, d1, d1, rng),
            w_o: ParamTensor::uniform(d2, d2, d2, rng),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusionGrads {
    pub w_s: Matrix,
    pub w_o: Matrix,
}

impl FusionGrads {
    pub fn zeros_like(p: &FusionParams) -> Self {
        FusionGrads {
            w_s: Matrix::zeros(p.w_s.shape().0, p.w_s.shape().1),
            w_o: Matrix::zeros(p.w_o.shape().0, p.w_o.shape().1),
        }
    }
}

/// How object rows are pooled into `f_obj`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pooling {
    /// `Σ a_i o_i` with scene attention; `normalized` divides by the sum of
    /// active weights.
    Attention { normalized: bool },
    /// Plain mean over active rows.
    Mean,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmotionFeature {
    pub f_obj: Vec<f64>,
    pub f_emo: Vec<f64>,
    /// Raw attention per slot (`σ(·)`), or the pooling weights when
    /// attention is off.
    pub attention: Vec<f64>,
}

fn check_fusion_shapes(scene: &[f64], objects: &Matrix, params: &FusionParams) -> Result<()> {
    if params.w_s.shape().1 != scene.len() {
        return Err(Error::shape(
            "scene_attention W_s",
            params.w_s.shape(),
            (scene.len(), 1),
        ));
    }
    if params.w_o.shape().1 != objects.cols() {
        return Err(Error::shape(
            "scene_attention W_o",
            params.w_o.shape(),
            objects.shape(),
        ));
    }
    Ok(())
}

/// `a_i = σ(ℓ₂(W_s f_sce) · ℓ₂(W_o o_i))`.
pub fn scene_attention(scene: &[f64], objects: &Matrix, params: &FusionParams) -> Result<Vec<f64>> {
    Ok(AttentionTrace::compute(scene, objects, params)?.weights)
}

/// `f_obj = Σ_i a_i o_i`.
pub fn attend_fuse(weights: &[f64], objects: &Matrix) -> Result<Vec<f64>> {
    if weights.len() != objects.rows() {
        return Err(Error::shape(
            "attend_fuse",
            (weights.len(), 1),
            objects.shape(),
        ));
    }
    objects.matvec_t(weights)
}

/// `[f_sce ∥ f_obj]`.
pub fn concat_features(scene: &[f64], f_obj: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(scene.len() + f_obj.len());
    out.extend_from_slice(scene);
    out.extend_from_slice(f_obj);
    out
}

struct AttentionTrace {
    scene_pre: Vec<f64>,
    scene_unit: Vec<f64>,
    object_pre: Matrix,
    object_unit: Matrix,
    weights: Vec<f64>,
}

impl AttentionTrace {
    fn compute(scene: &[f64], objects: &Matrix, params: &FusionParams) -> Result<Self> {
        check_fusion_shapes(scene, objects, params)?;
        let scene_pre = params.w_s.value.matvec(scene)?;
        let scene_unit = l2_normalize(&scene_pre, NORM_EPS);
        let object_pre = objects.matmul_nt(&params.w_o.value)?;
        let mut object_unit = Matrix::zeros(object_pre.rows(), object_pre.cols());
        let mut weights = Vec::with_capacity(objects.rows());
        for i in 0..objects.rows() {
            let q = l2_normalize(object_pre.row(i), NORM_EPS);
            weights.push(sigmoid(dot(&scene_unit, &q)));
            object_unit.row_mut(i).copy_from_slice(&q);
        }
        Ok(AttentionTrace {
            scene_pre,
            scene_unit,
            object_pre,
            object_unit,
            weights,
        })
    }
}

/// Forward intermediates for [`fuse_backward`].
pub struct FusionCache {
    trace: Option<AttentionTrace>,
    pooling: Pooling,
    /// Coefficients actually multiplying each object row.
    coefficients: Vec<f64>,
    active_sum: f64,
    f_obj: Vec<f64>,
}

/// Pools object rows into `f_obj`. Inactive rows get coefficient zero.
pub fn fuse_forward(
    scene: &[f64],
    objects: &Matrix,
    active: &[bool],
    params: &FusionParams,
    pooling: Pooling,
) -> Result<(Vec<f64>, Vec<f64>, FusionCache)> {
    let n = objects.rows();
    if active.len() != n {
        return Err(Error::shape(
            "fuse_forward",
            (active.len(), 1),
            objects.shape(),
        ));
    }
    let (trace, coefficients, reported, active_sum) = match pooling {
        Pooling::Attention { normalized } => {
            let trace = AttentionTrace::compute(scene, objects, params)?;
            let (coefficients, sum) = if normalized {
                let sum: f64 = trace
                    .weights
                    .iter()
                    .zip(active)
                    .filter(|(_, &a)| a)
                    .map(|(w, _)| w)
                    .sum();
                let c = trace
                    .weights
                    .iter()
                    .zip(active)
                    .map(|(w, &a)| if a && sum > 0.0 { w / sum } else { 0.0 })
                    .collect();
                (c, sum)
            } else {
                (trace.weights.clone(), 0.0)
            };
            let reported = trace.weights.clone();
            (Some(trace), coefficients, reported, sum)
        }
        Pooling::Mean => {
            let k = active.iter().filter(|&&a| a).count();
            let c: Vec<f64> = active
                .iter()
                .map(|&a| if a { 1.0 / k as f64 } else { 0.0 })
                .collect();
            (None, c.clone(), c, k as f64)
        }
    };
    let f_obj = attend_fuse(&coefficients, objects)?;
    Ok((
        f_obj.clone(),
        reported,
        FusionCache {
            trace,
            pooling,
            coefficients,
            active_sum,
            f_obj,
        },
    ))
}

/// Accumulates `W_s`, `W_o` gradients; returns `(∂L/∂objects, ∂L/∂f_sce)`.
pub fn fuse_backward(
    cache: &FusionCache,
    scene: &[f64],
    objects: &Matrix,
    active: &[bool],
    params: &FusionParams,
    d_f_obj: &[f64],
    grads: &mut FusionGrads,
) -> Result<(Matrix, Vec<f64>)> {
    let n = objects.rows();
    let mut d_objects = Matrix::zeros(n, objects.cols());
    for i in 0..n {
        axpy(cache.coefficients[i], d_f_obj, d_objects.row_mut(i));
    }
    let mut d_scene = vec![0.0; scene.len()];
    let Some(trace) = &cache.trace else {
        return Ok((d_objects, d_scene));
    };
    let normalized = matches!(cache.pooling, Pooling::Attention { normalized: true });

    let mut d_scene_unit = vec![0.0; trace.scene_unit.len()];
    let mut d_object_pre = Matrix::zeros(n, trace.object_pre.cols());
    for i in 0..n {
        let d_weight = if normalized {
            if !active[i] || cache.active_sum <= 0.0 {
                continue;
            }
            // ∂f/∂a_i = (o_i − f) / S
            (dot(objects.row(i), d_f_obj) - dot(&cache.f_obj, d_f_obj)) / cache.active_sum
        } else {
            dot(objects.row(i), d_f_obj)
        };
        let d_logit = d_weight * sigmoid_grad_from_output(trace.weights[i]);
        if d_logit == 0.0 {
            continue;
        }
        axpy(d_logit, trace.object_unit.row(i), &mut d_scene_unit);
        let d_q: Vec<f64> = trace.scene_unit.iter().map(|s| d_logit * s).collect();
        let d_h = l2_normalize_adjoint(trace.object_pre.row(i), &d_q, NORM_EPS);
        d_object_pre.row_mut(i).copy_from_slice(&d_h);
    }
    // object_pre = X W_oᵀ
    grads.w_o.add_assign(&d_object_pre.matmul_tn(objects)?)?;
    d_objects.add_assign(&d_object_pre.matmul(&params.w_o.value)?)?;

    let d_scene_pre = l2_normalize_adjoint(&trace.scene_pre, &d_scene_unit, NORM_EPS);
    grads.w_s.add_outer(1.0, &d_scene_pre, scene)?;
    d_scene = params.w_s.value.matvec_t(&d_scene_pre)?;
    Ok((d_objects, d_scene))
}
