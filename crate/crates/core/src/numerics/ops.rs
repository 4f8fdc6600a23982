//! Elementwise and vector nonlinearities with their adjoints.

use super::matrix::dot;

/// Norm floor below which a vector is treated as zero.
pub const NORM_EPS: f64 = 1e-12;

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// `v / ‖v‖₂`, or the zero vector when `‖v‖₂ <= eps`.
pub fn l2_normalize(v: &[f64], eps: f64) -> Vec<f64> {
    let n = norm(v);
    if n <= eps {
        return vec![0.0; v.len()];
    }
    v.iter().map(|x| x / n).collect()
}

/// Adjoint of [`l2_normalize`] at input `v` given the upstream gradient `d_out`.
///
/// For `u = v/‖v‖` the Jacobian is `(I - u uᵀ)/‖v‖`; it is zero on the
/// zero-vector branch.
pub fn l2_normalize_adjoint(v: &[f64], d_out: &[f64], eps: f64) -> Vec<f64> {
    let n = norm(v);
    if n <= eps {
        return vec![0.0; v.len()];
    }
    let u: Vec<f64> = v.iter().map(|x| x / n).collect();
    let proj = dot(&u, d_out);
    u.iter()
        .zip(d_out)
        .map(|(ui, gi)| (gi - ui * proj) / n)
        .collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Derivative of the sigmoid expressed through its output `s = σ(x)`.
pub fn sigmoid_grad_from_output(s: f64) -> f64 {
    s * (1.0 - s)
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
