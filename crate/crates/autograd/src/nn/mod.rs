mod attention;
pub mod init;
mod layers;
mod lstm;

pub use attention::{MultiHeadAttention, TransformerBlock, TransformerEncoder};
pub use layers::{BatchNorm, Conv2dLayer, Conv3dLayer, Dropout, LayerNormLayer, Linear};
pub use lstm::Lstm;

use std::cell::RefCell;

use ndarray::ArrayD;
use rand_chacha::ChaCha20Rng;

use crate::{Scalar, Tensor};

/// Per-call forward state: train/eval switch plus the rng stream stochastic
/// layers draw from.
pub struct Ctx {
    pub train: bool,
    pub rng: ChaCha20Rng,
}

impl Ctx {
    pub fn train(rng: ChaCha20Rng) -> Self {
        Ctx { train: true, rng }
    }

    pub fn eval() -> Self {
        Ctx {
            train: false,
            rng: init::seed_stream(0, "eval-unused"),
        }
    }
}

/// Anything that owns parameters. Visitation is name-based so optimizers,
/// checkpoints, and parameter counting all share one traversal.
pub trait Module<T: Scalar> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>));

    /// Non-trainable state (batch-norm running statistics).
    fn visit_buffers(&self, _prefix: &str, _f: &mut dyn FnMut(&str, &RefCell<ArrayD<T>>)) {}
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

pub fn named_params<T: Scalar>(m: &dyn Module<T>) -> Vec<(String, Tensor<T>)> {
    let mut out = Vec::new();
    m.visit_params("", &mut |name, t| out.push((name.to_string(), t.clone())));
    out
}

pub fn named_buffers<T: Scalar>(m: &dyn Module<T>) -> Vec<(String, ArrayD<T>)> {
    let mut out = Vec::new();
    m.visit_buffers("", &mut |name, b| {
        out.push((name.to_string(), b.borrow().clone()))
    });
    out
}

/// Total number of trainable scalars.
pub fn param_count<T: Scalar>(m: &dyn Module<T>) -> usize {
    let mut n = 0usize;
    m.visit_params("", &mut |_, t| n += t.len());
    n
}
