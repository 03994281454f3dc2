mod activation;
mod arith;
mod conv;
mod loss;
mod matmul;
mod norm;
mod pool;
mod reduce;
mod shape;

pub use activation::*;
pub use arith::*;
pub use conv::*;
pub use loss::*;
pub use matmul::*;
pub use norm::*;
pub use pool::*;
pub use reduce::*;
pub use shape::*;

use crate::{Scalar, Tensor};

pub(crate) fn should_record<T: Scalar>(inputs: &[&Tensor<T>]) -> bool {
    crate::tensor::recording() && inputs.iter().any(|t| t.on_grad_path())
}

/// Reshape helper that tolerates non-standard layouts.
pub(crate) fn reshaped<T: Scalar>(
    a: ndarray::ArrayD<T>,
    shape: &[usize],
) -> ndarray::ArrayD<T> {
    let contiguous = if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    };
    contiguous
        .into_shape_with_order(ndarray::IxDyn(shape))
        .expect("reshape must preserve element count")
}
