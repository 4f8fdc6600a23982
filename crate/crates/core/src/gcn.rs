//! Residual graph convolution over the masked affinity.
//!
//! One layer maps `X ↦ act((R X W_g) W_rᵀ) + X`, with `act` the identity
//! unless an experimental activation is selected. Weights are per layer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, ParamTensor};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Identity,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative given the pre-activation value.
    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GcnLayer {
    /// `d2 x d2`
    pub w_g: ParamTensor,
    /// `d2 x d2`, applied on the feature side.
    pub w_r: ParamTensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GcnParams {
    pub layers: Vec<GcnLayer>,
    pub activation: Activation,
}

impl GcnParams {
    pub fn init<R: Rng + ?Sized>(
        d2: usize,
        depth: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if depth == 0 {
            return Err(Error::Config("GCN depth must be at least 1".into()));
        }
        let layers = (0..depth)
            .map(|_| GcnLayer {
                w_g: ParamTensor::uniform(d2, d2, d2, rng),
                w_r: ParamTensor::uniform(d2, d2, d2, rng),
            })
            .collect();
        Ok(GcnParams { layers, activation })
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GcnGrads {
    pub w_g: Vec<Matrix>,
    pub w_r: Vec<Matrix>,
}

impl GcnGrads {
    pub fn zeros_like(p: &GcnParams) -> Self {
        let z = |t: &ParamTensor| Matrix::zeros(t.shape().0, t.shape().1);
        GcnGrads {
            w_g: p.layers.iter().map(|l| z(&l.w_g)).collect(),
            w_r: p.layers.iter().map(|l| z(&l.w_r)).collect(),
        }
    }
}

struct LayerTrace {
    input: Matrix,
    /// `R X`
    propagated: Matrix,
    /// `R X W_g`
    transformed: Matrix,
    /// `(R X W_g) W_rᵀ` before the activation
    pre_activation: Matrix,
}

/// Per-layer intermediates for the backward pass.
pub struct GcnCache {
    layers: Vec<LayerTrace>,
}

fn layer_forward(
    x: &Matrix,
    affinity: &Matrix,
    w_g: &Matrix,
    w_r: &Matrix,
    activation: Activation,
) -> Result<(Matrix, LayerTrace)> {
    if affinity.shape() != (x.rows(), x.rows()) {
        return Err(Error::shape("gcn_layer", affinity.shape(), x.shape()));
    }
    let propagated = affinity.matmul(x)?;
    let transformed = propagated.matmul(w_g)?;
    let pre_activation = transformed.matmul_nt(w_r)?;
    let mut out = x.clone();
    for (o, h) in out.data_mut().iter_mut().zip(pre_activation.data()) {
        *o += activation.apply(*h);
    }
    Ok((
        out,
        LayerTrace {
            input: x.clone(),
            propagated,
            transformed,
            pre_activation,
        },
    ))
}

/// A single residual layer `(R X W_g) W_rᵀ + X`.
pub fn gcn_layer(x: &Matrix, affinity: &Matrix, w_g: &Matrix, w_r: &Matrix) -> Result<Matrix> {
    Ok(layer_forward(x, affinity, w_g, w_r, Activation::Identity)?.0)
}

/// Applies every layer in order.
pub fn reason(nodes: &Matrix, affinity: &Matrix, params: &GcnParams) -> Result<Matrix> {
    Ok(reason_with_cache(nodes, affinity, params)?.0)
}

pub fn reason_with_cache(
    nodes: &Matrix,
    affinity: &Matrix,
    params: &GcnParams,
) -> Result<(Matrix, GcnCache)> {
    let mut x = nodes.clone();
    let mut traces = Vec::with_capacity(params.depth());
    for layer in &params.layers {
        let (next, trace) = layer_forward(
            &x,
            affinity,
            &layer.w_g.value,
            &layer.w_r.value,
            params.activation,
        )?;
        traces.push(trace);
        x = next;
    }
    Ok((x, GcnCache { layers: traces }))
}

/// Accumulates weight gradients and returns `(∂L/∂O′, ∂L/∂R^e′)`.
pub fn reason_backward(
    cache: &GcnCache,
    affinity: &Matrix,
    params: &GcnParams,
    d_out: &Matrix,
    grads: &mut GcnGrads,
) -> Result<(Matrix, Matrix)> {
    let n = affinity.rows();
    let mut d_affinity = Matrix::zeros(n, n);
    let mut d_x = d_out.clone();
    for (l, trace) in cache.layers.iter().enumerate().rev() {
        let layer = &params.layers[l];
        let mut d_pre = d_x.clone();
        if params.activation != Activation::Identity {
            for (g, h) in d_pre.data_mut().iter_mut().zip(trace.pre_activation.data()) {
                *g *= params.activation.derivative(*h);
            }
        }
        // pre = T W_rᵀ
        grads.w_r[l].add_assign(&d_pre.matmul_tn(&trace.transformed)?)?;
        let d_transformed = d_pre.matmul(&layer.w_r.value)?;
        // T = P W_g
        grads.w_g[l].add_assign(&trace.propagated.matmul_tn(&d_transformed)?)?;
        let d_propagated = d_transformed.matmul_nt(&layer.w_g.value)?;
        // P = R X
        d_affinity.add_assign(&d_propagated.matmul_nt(&trace.input)?)?;
        // residual path keeps d_x itself
        d_x.add_assign(&affinity.matmul_tn(&d_propagated)?)?;
    }
    Ok((d_x, d_affinity))
}
