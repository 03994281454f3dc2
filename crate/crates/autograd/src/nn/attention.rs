use rand_chacha::ChaCha20Rng;

use super::{join, Ctx, Dropout, LayerNormLayer, Linear, Module};
use crate::ops;
use crate::{Scalar, Tensor};

pub struct MultiHeadAttention<T: Scalar> {
    pub wq: Linear<T>,
    pub wk: Linear<T>,
    pub wv: Linear<T>,
    pub wo: Linear<T>,
    pub heads: usize,
    pub dim: usize,
}

impl<T: Scalar> MultiHeadAttention<T> {
    pub fn new(dim: usize, heads: usize, rng: &mut ChaCha20Rng) -> Self {
        assert_eq!(dim % heads, 0, "model width divisible by heads");
        MultiHeadAttention {
            wq: Linear::new(dim, dim, true, rng),
            wk: Linear::new(dim, dim, true, rng),
            wv: Linear::new(dim, dim, true, rng),
            wo: Linear::new(dim, dim, true, rng),
            heads,
            dim,
        }
    }

    fn split_heads(&self, x: &Tensor<T>, b: usize, s: usize) -> Tensor<T> {
        let dk = self.dim / self.heads;
        let x = ops::reshape(x, &[b, s, self.heads, dk]);
        let x = ops::permute(&x, &[0, 2, 1, 3]);
        ops::reshape(&x, &[b * self.heads, s, dk])
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let shape = x.shape();
        let (b, s) = (shape[0], shape[1]);
        let dk = self.dim / self.heads;
        let q = self.split_heads(&self.wq.forward(x), b, s);
        let k = self.split_heads(&self.wk.forward(x), b, s);
        let v = self.split_heads(&self.wv.forward(x), b, s);
        let kt = ops::permute(&k, &[0, 2, 1]);
        let scale = T::one() / T::of_f64((dk as f64).sqrt());
        let scores = ops::mul_scalar(&ops::bmm(&q, &kt), scale);
        let attn = ops::softmax_last(&scores);
        let mixed = ops::bmm(&attn, &v);
        let mixed = ops::reshape(&mixed, &[b, self.heads, s, dk]);
        let mixed = ops::permute(&mixed, &[0, 2, 1, 3]);
        let mixed = ops::reshape(&mixed, &[b, s, self.dim]);
        self.wo.forward(&mixed)
    }
}

impl<T: Scalar> Module<T> for MultiHeadAttention<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        self.wq.visit_params(&join(prefix, "wq"), f);
        self.wk.visit_params(&join(prefix, "wk"), f);
        self.wv.visit_params(&join(prefix, "wv"), f);
        self.wo.visit_params(&join(prefix, "wo"), f);
    }
}

/// Pre-norm transformer block: x + attn(ln(x)), then x + mlp(ln(x)).
pub struct TransformerBlock<T: Scalar> {
    pub ln1: LayerNormLayer<T>,
    pub attn: MultiHeadAttention<T>,
    pub ln2: LayerNormLayer<T>,
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
    pub drop: Dropout,
}

impl<T: Scalar> TransformerBlock<T> {
    pub fn new(dim: usize, heads: usize, mlp_ratio: usize, dropout: f64, rng: &mut ChaCha20Rng) -> Self {
        TransformerBlock {
            ln1: LayerNormLayer::new(dim),
            attn: MultiHeadAttention::new(dim, heads, rng),
            ln2: LayerNormLayer::new(dim),
            fc1: Linear::new(dim, dim * mlp_ratio, true, rng),
            fc2: Linear::new(dim * mlp_ratio, dim, true, rng),
            drop: Dropout::new(dropout),
        }
    }

    pub fn forward(&self, x: &Tensor<T>, ctx: &mut Ctx) -> Tensor<T> {
        let attended = self.attn.forward(&self.ln1.forward(x));
        let x = ops::add(x, &self.drop.forward(&attended, ctx));
        let h = ops::gelu(&self.fc1.forward(&self.ln2.forward(&x)));
        let h = self.fc2.forward(&h);
        ops::add(&x, &self.drop.forward(&h, ctx))
    }
}

impl<T: Scalar> Module<T> for TransformerBlock<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        self.ln1.visit_params(&join(prefix, "ln1"), f);
        self.attn.visit_params(&join(prefix, "attn"), f);
        self.ln2.visit_params(&join(prefix, "ln2"), f);
        self.fc1.visit_params(&join(prefix, "fc1"), f);
        self.fc2.visit_params(&join(prefix, "fc2"), f);
    }
}

pub struct TransformerEncoder<T: Scalar> {
    pub blocks: Vec<TransformerBlock<T>>,
    pub final_ln: LayerNormLayer<T>,
}

impl<T: Scalar> TransformerEncoder<T> {
    pub fn new(
        dim: usize,
        depth: usize,
        heads: usize,
        mlp_ratio: usize,
        dropout: f64,
        rng: &mut ChaCha20Rng,
    ) -> Self {
        TransformerEncoder {
            blocks: (0..depth)
                .map(|_| TransformerBlock::new(dim, heads, mlp_ratio, dropout, rng))
                .collect(),
            final_ln: LayerNormLayer::new(dim),
        }
    }

    pub fn forward(&self, x: &Tensor<T>, ctx: &mut Ctx) -> Tensor<T> {
        let mut h = x.clone();
        for block in &self.blocks {
            h = block.forward(&h, ctx);
        }
        self.final_ln.forward(&h)
    }
}

impl<T: Scalar> Module<T> for TransformerEncoder<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit_params(&join(prefix, &format!("block{i}")), f);
        }
        self.final_ln.visit_params(&join(prefix, "final_ln"), f);
    }
}
