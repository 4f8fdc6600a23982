use rand::Rng;

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// A learnable tensor together with its gradient and Adam moment buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamTensor {
    pub value: Matrix,
    pub grad: Matrix,
    pub adam_m: Matrix,
    pub adam_v: Matrix,
}

impl ParamTensor {
    pub fn new(value: Matrix) -> Self {
        let (r, c) = value.shape();
        ParamTensor {
            value,
            grad: Matrix::zeros(r, c),
            adam_m: Matrix::zeros(r, c),
            adam_v: Matrix::zeros(r, c),
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        ParamTensor::new(Matrix::zeros(rows, cols))
    }

    /// Uniform initialization in `±1/√fan_in`.
    pub fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        ParamTensor::new(Matrix::from_vec(rows, cols, data).expect("length matches"))
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.shape()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Anything exposing an ordered list of learnable tensors.
pub trait Parameterized {
    fn params(&self) -> Vec<&ParamTensor>;
    fn params_mut(&mut self) -> Vec<&mut ParamTensor>;

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }
}

impl Parameterized for Vec<ParamTensor> {
    fn params(&self) -> Vec<&ParamTensor> {
        self.iter().collect()
    }

    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        self.iter_mut().collect()
    }
}

/// Central-difference gradient `(L(θ+h) − L(θ−h)) / 2h` for every scalar of
/// every parameter, in `params()` order. Parameter values are restored
/// exactly afterwards.
pub fn finite_diff_grad<P, F>(target: &mut P, mut loss_fn: F, h: f64) -> Result<Vec<Matrix>>
where
    P: Parameterized + ?Sized,
    F: FnMut(&P) -> f64,
{
    if h.is_nan() || h <= 0.0 {
        return Err(Error::Config(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let shapes: Vec<(usize, usize)> = target.params().iter().map(|p| p.shape()).collect();
    let mut grads = Vec::with_capacity(shapes.len());
    for (idx, &(r, c)) in shapes.iter().enumerate() {
        let mut g = Matrix::zeros(r, c);
        for k in 0..r * c {
            let orig = target.params()[idx].value.data()[k];
            target.params_mut()[idx].value.data_mut()[k] = orig + h;
            let plus = loss_fn(target);
            target.params_mut()[idx].value.data_mut()[k] = orig - h;
            let minus = loss_fn(target);
            target.params_mut()[idx].value.data_mut()[k] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::Numeric(format!(
                    "loss is not finite when perturbing parameter {idx}, entry {k}"
                )));
            }
            g.data_mut()[k] = (plus - minus) / (2.0 * h);
        }
        grads.push(g);
    }
    Ok(grads)
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both are exactly zero.
pub fn relative_error(a: &Matrix, b: &Matrix) -> Result<f64> {
    let diff = a.sub(b)?.frobenius_norm();
    let scale = a.frobenius_norm().max(b.frobenius_norm());
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok(diff / scale.max(1e-12))
}
