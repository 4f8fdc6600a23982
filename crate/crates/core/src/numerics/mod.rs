//! Dense `f64` linear algebra with paired adjoints, the parameter container
//! and the finite-difference gradient checker.

mod matrix;
mod ops;
mod param;

pub use matrix::{axpy, dot, matmul_adjoint, Matrix};
pub use ops::{
    l2_normalize, l2_normalize_adjoint, norm, sigmoid, sigmoid_grad_from_output, softmax, NORM_EPS,
};
pub use param::{finite_diff_grad, relative_error, ParamTensor, Parameterized};
