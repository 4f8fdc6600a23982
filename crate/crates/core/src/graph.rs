//! Emotion Graph construction.
//!
//! Visual features are mapped into an emotional space and ℓ₂-normalized
//! (`v^e_i = ℓ₂(W_e v_i + b_e)`), pairwise affinities are taken between two
//! linear embeddings of those vectors (`r_ij = (W_φ v^e_i)ᵀ (W_ψ v^e_j)`),
//! and nodes below the confidence threshold are removed together with their
//! edges.

use rand::Rng;

use crate::error::{Error, Result};
use crate::ingestion::Sample;
use crate::numerics::{l2_normalize, l2_normalize_adjoint, Matrix, ParamTensor, NORM_EPS};

/// Default confidence threshold.
pub const DEFAULT_TAU: f64 = 0.3;

#[derive(Clone, Debug, PartialEq)]
pub struct GraphParams {
    /// `d1 x d1`
    pub w_e: ParamTensor,
    /// `1 x d1`
    pub b_e: ParamTensor,
    /// `d_a x d1`
    pub w_phi: ParamTensor,
    /// `d_a x d1`
    pub w_psi: ParamTensor,
    pub tau: f64,
}

impl GraphParams {
    pub fn init<R: Rng + ?Sized>(d1: usize, d_a: usize, tau: f64, rng: &mut R) -> Result<Self> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::Range {
                what: "confidence threshold".into(),
                value: tau,
            });
        }
        Ok(GraphParams {
            w_e: ParamTensor::uniform(d1, d1, d1, rng),
            b_e: ParamTensor::uniform(1, d1, d1, rng),
            w_phi: ParamTensor::uniform(d_a, d1, d1, rng),
            w_psi: ParamTensor::uniform(d_a, d1, d1, rng),
            tau,
        })
    }

    pub fn d1(&self) -> usize {
        self.w_e.shape().0
    }

    pub fn d_a(&self) -> usize {
        self.w_phi.shape().0
    }
}

/// Gradient buffers matching [`GraphParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct GraphGrads {
    pub w_e: Matrix,
    pub b_e: Matrix,
    pub w_phi: Matrix,
    pub w_psi: Matrix,
}

impl GraphGrads {
    pub fn zeros_like(p: &GraphParams) -> Self {
        let z = |t: &ParamTensor| Matrix::zeros(t.shape().0, t.shape().1);
        GraphGrads {
            w_e: z(&p.w_e),
            b_e: z(&p.b_e),
            w_phi: z(&p.w_phi),
            w_psi: z(&p.w_psi),
        }
    }
}

/// Switches for the ablation variants of graph construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GraphOptions {
    /// Separate `W_φ`, `W_ψ`; when false `W_φ` is used on both sides.
    pub two_embeddings: bool,
    /// Drop nodes below the threshold and mask their edges.
    pub use_mask: bool,
    /// Keep only the single most confident slot.
    pub single_object: bool,
}

impl Default for GraphOptions {
    fn default() -> Self {
        GraphOptions {
            two_embeddings: true,
            use_mask: true,
            single_object: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmotionGraph {
    /// Filtered semantic node features `O′` (`N x d2`).
    pub nodes: Matrix,
    /// Raw affinity `R^e` (`N x N`).
    pub affinity: Matrix,
    /// Binary mask `M`.
    pub mask: Matrix,
    /// `M ⊙ R^e`.
    pub masked_affinity: Matrix,
    pub active: Vec<bool>,
}

/// Intermediate values kept for the backward pass.
#[derive(Clone, Debug)]
pub struct GraphCache {
    pre_norm: Matrix,
    embedded: Matrix,
    phi: Matrix,
    psi: Matrix,
    two_embeddings: bool,
}

/// `V^e`: row `i` is `ℓ₂(W_e v_i + b_e)`.
pub fn emotional_embedding(visual: &Matrix, params: &GraphParams) -> Result<Matrix> {
    Ok(embed_with_pre_norm(visual, params)?.1)
}

fn embed_with_pre_norm(visual: &Matrix, params: &GraphParams) -> Result<(Matrix, Matrix)> {
    let mut pre = visual.matmul_nt(&params.w_e.value)?;
    let bias = params.b_e.value.data();
    if bias.len() != pre.cols() {
        return Err(Error::shape(
            "emotional_embedding bias",
            pre.shape(),
            params.b_e.shape(),
        ));
    }
    let mut out = Matrix::zeros(pre.rows(), pre.cols());
    for i in 0..pre.rows() {
        crate::numerics::axpy(1.0, bias, pre.row_mut(i));
        out.row_mut(i)
            .copy_from_slice(&l2_normalize(pre.row(i), NORM_EPS));
    }
    Ok((pre, out))
}

/// `R^e = (V^e W_φᵀ)(V^e W_ψᵀ)ᵀ`; not symmetric unless `W_φ = W_ψ`.
pub fn affinity_matrix(embedded: &Matrix, w_phi: &Matrix, w_psi: &Matrix) -> Result<Matrix> {
    let phi = embedded.matmul_nt(w_phi)?;
    let psi = embedded.matmul_nt(w_psi)?;
    phi.matmul_nt(&psi)
}

/// Zeroes rows of `O` whose confidence is below `tau` (the threshold itself is kept).
pub fn filter_nodes(
    semantic: &Matrix,
    confidences: &[f64],
    tau: f64,
) -> Result<(Matrix, Vec<bool>)> {
    if confidences.len() != semantic.rows() {
        return Err(Error::shape(
            "filter_nodes",
            semantic.shape(),
            (confidences.len(), 1),
        ));
    }
    let active: Vec<bool> = confidences.iter().map(|&p| p >= tau).collect();
    Ok((zero_inactive_rows(semantic, &active), active))
}

fn zero_inactive_rows(m: &Matrix, active: &[bool]) -> Matrix {
    let mut out = m.clone();
    for (i, &a) in active.iter().enumerate() {
        if !a {
            out.row_mut(i).fill(0.0);
        }
    }
    out
}

/// `m_ij = 1` iff both `i` and `j` are active.
pub fn mask_matrix(active: &[bool]) -> Matrix {
    let n = active.len();
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if active[i] && active[j] {
                m[(i, j)] = 1.0;
            }
        }
    }
    m
}

pub fn masked_affinity(affinity: &Matrix, mask: &Matrix) -> Result<Matrix> {
    affinity.hadamard(mask)
}

/// Slots that survive selection: the most confident slot alone in
/// single-object mode, then the threshold when masking is on.
pub fn kept_slots(confidences: &[f64], tau: f64, options: &GraphOptions) -> Vec<bool> {
    let n = confidences.len();
    let mut keep = vec![!options.single_object; n];
    if options.single_object && n > 0 {
        let mut best = 0;
        for i in 1..n {
            if confidences[i] > confidences[best] {
                best = i;
            }
        }
        keep[best] = true;
    }
    if options.use_mask {
        for (k, &p) in keep.iter_mut().zip(confidences) {
            *k = *k && p >= tau;
        }
    }
    keep
}

/// Builds the full graph with default options.
pub fn build_graph(sample: &Sample, params: &GraphParams) -> Result<EmotionGraph> {
    Ok(build_graph_with(sample, params, &GraphOptions::default())?.0)
}

pub fn build_graph_with(
    sample: &Sample,
    params: &GraphParams,
    options: &GraphOptions,
) -> Result<(EmotionGraph, GraphCache)> {
    let n = sample.node_count();
    if sample.semantic.rows() != n || sample.visual.rows() != n {
        return Err(Error::shape(
            "build_graph",
            sample.visual.shape(),
            sample.semantic.shape(),
        ));
    }
    let (pre_norm, embedded) = embed_with_pre_norm(&sample.visual, params)?;
    let w_psi = if options.two_embeddings {
        &params.w_psi.value
    } else {
        &params.w_phi.value
    };
    let phi = embedded.matmul_nt(&params.w_phi.value)?;
    let psi = embedded.matmul_nt(w_psi)?;
    let affinity = phi.matmul_nt(&psi)?;

    let active = kept_slots(&sample.confidences, params.tau, options);
    let nodes = zero_inactive_rows(&sample.semantic, &active);
    let mask = mask_matrix(&active);
    let masked = masked_affinity(&affinity, &mask)?;
    Ok((
        EmotionGraph {
            nodes,
            affinity,
            mask,
            masked_affinity: masked,
            active,
        },
        GraphCache {
            pre_norm,
            embedded,
            phi,
            psi,
            two_embeddings: options.two_embeddings,
        },
    ))
}

/// Accumulates parameter gradients given `∂L/∂R^e′`.
pub fn graph_backward(
    graph: &EmotionGraph,
    cache: &GraphCache,
    sample: &Sample,
    params: &GraphParams,
    d_masked: &Matrix,
    grads: &mut GraphGrads,
) -> Result<()> {
    let d_aff = d_masked.hadamard(&graph.mask)?;
    // R = Φ Ψᵀ
    let d_phi = d_aff.matmul(&cache.psi)?;
    let d_psi = d_aff.matmul_tn(&cache.phi)?;
    let w_psi = if cache.two_embeddings {
        &params.w_psi.value
    } else {
        &params.w_phi.value
    };
    grads.w_phi.add_assign(&d_phi.matmul_tn(&cache.embedded)?)?;
    let d_w_psi = d_psi.matmul_tn(&cache.embedded)?;
    if cache.two_embeddings {
        grads.w_psi.add_assign(&d_w_psi)?;
    } else {
        grads.w_phi.add_assign(&d_w_psi)?;
    }
    let mut d_embedded = d_phi.matmul(&params.w_phi.value)?;
    d_embedded.add_assign(&d_psi.matmul(w_psi)?)?;

    let mut d_pre = Matrix::zeros(cache.pre_norm.rows(), cache.pre_norm.cols());
    for i in 0..d_pre.rows() {
        let g = l2_normalize_adjoint(cache.pre_norm.row(i), d_embedded.row(i), NORM_EPS);
        d_pre.row_mut(i).copy_from_slice(&g);
    }
    grads.w_e.add_assign(&d_pre.matmul_tn(&sample.visual)?)?;
    for i in 0..d_pre.rows() {
        crate::numerics::axpy(1.0, d_pre.row(i), grads.b_e.data_mut());
    }
    Ok(())
}
