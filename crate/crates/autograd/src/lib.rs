//! Small reverse-mode autodiff engine over `ndarray`, generic over the
//! scalar type (f32 for training, f64 for gradient checks), plus the layer
//! zoo, initializers, optimizer, and tensor-blob serialization used by the
//! smokeynet crates.

pub mod nn;
pub mod ops;
pub mod optim;
mod scalar;
pub mod serialize;
mod tensor;

pub use scalar::Scalar;
pub use tensor::{no_grad, Tensor};

/// Concrete aliases for the two supported scalar types.
pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
