use ndarray::{ArrayD, IxDyn};
use rand_chacha::ChaCha20Rng;
use smokeynet_autograd::nn::{init, join, Ctx, Linear, Module, TransformerEncoder};
use smokeynet_autograd::{ops, Scalar, Tensor};

/// Spatial aggregator: a transformer over the tile embeddings plus one
/// summary (CLS) token whose output drives the image head.
///
/// Width is `min(backbone_width, 768)`; depth 6, 8 heads, 4x feed-forward.
/// Positional information is a learned embedding per grid position and can
/// be disabled, making the image logit invariant to tile permutations.
pub struct TileVit<T: Scalar> {
    pub input_proj: Option<Linear<T>>,
    pub cls: Tensor<T>,
    pub pos: Tensor<T>,
    pub positional: bool,
    pub encoder: TransformerEncoder<T>,
    pub width: usize,
    pub tiles: usize,
}

pub const VIT_DEPTH: usize = 6;
pub const VIT_HEADS: usize = 8;
pub const VIT_MAX_WIDTH: usize = 768;

impl<T: Scalar> TileVit<T> {
    pub fn new(
        in_width: usize,
        tiles: usize,
        positional: bool,
        dropout: f64,
        rng: &mut ChaCha20Rng,
    ) -> Self {
        let width = in_width.min(VIT_MAX_WIDTH);
        let width = width - width % VIT_HEADS;
        let input_proj =
            (width != in_width).then(|| Linear::new(in_width, width, true, rng));
        let cls = Tensor::param(init::normal(&[1, 1, width], 0.0, 0.02, rng));
        let pos = Tensor::param(init::normal(&[1, tiles + 1, width], 0.0, 0.02, rng));
        TileVit {
            input_proj,
            cls,
            pos,
            positional,
            encoder: TransformerEncoder::new(width, VIT_DEPTH, VIT_HEADS, 4, dropout, rng),
            width,
            tiles,
        }
    }

    /// (B, tiles, E) -> (cls_out (B, width), tile_out (B, tiles, width))
    pub fn forward(&self, tile_embs: &Tensor<T>, ctx: &mut Ctx) -> (Tensor<T>, Tensor<T>) {
        let shape = tile_embs.shape();
        let (b, tiles) = (shape[0], shape[1]);
        assert_eq!(tiles, self.tiles, "tile count fixed at build time");
        let x = match &self.input_proj {
            Some(p) => p.forward(tile_embs),
            None => tile_embs.clone(),
        };
        // broadcast the cls token across the batch
        let zeros = Tensor::constant(ArrayD::zeros(IxDyn(&[b, 1, self.width])));
        let cls = ops::add(&zeros, &self.cls);
        let mut tokens = ops::concat(&[cls, x], 1);
        if self.positional {
            tokens = ops::add(&tokens, &self.pos);
        }
        let out = self.encoder.forward(&tokens, ctx);
        let cls_out = ops::index_axis(&out, 1, 0);
        let tile_out = ops::slice_axis(&out, 1, 1, tiles);
        (cls_out, tile_out)
    }
}

impl<T: Scalar> Module<T> for TileVit<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        if let Some(p) = &self.input_proj {
            p.visit_params(&join(prefix, "input_proj"), f);
        }
        f(&join(prefix, "cls"), &self.cls);
        f(&join(prefix, "pos"), &self.pos);
        self.encoder.visit_params(&join(prefix, "encoder"), f);
    }
}
