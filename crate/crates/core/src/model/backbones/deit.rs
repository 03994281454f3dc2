use rand_chacha::ChaCha20Rng;
use smokeynet_autograd::nn::{init, join, Conv2dLayer, Ctx, Module, TransformerEncoder};
use smokeynet_autograd::{ops, Scalar, Tensor};

/// Tiny data-efficient vision transformer used as a per-tile backbone:
/// patch embedding, CLS token, learned positions, 12 blocks of width 192
/// with 3 heads. The CLS output is the tile embedding; the patch tokens,
/// reshaped onto their grid, serve as the feature map.
pub struct DeitTiny<T: Scalar> {
    patch: Conv2dLayer<T>,
    cls: Tensor<T>,
    pos: Tensor<T>,
    encoder: TransformerEncoder<T>,
    patch_size: usize,
    grid: usize,
}

pub const DEIT_WIDTH: usize = 192;
pub const DEIT_DEPTH: usize = 12;
pub const DEIT_HEADS: usize = 3;

fn pick_patch_size(tile: usize) -> usize {
    for p in [16usize, 8, 7, 4, 2, 1] {
        if tile % p == 0 && tile / p >= 2 {
            return p;
        }
    }
    1
}

impl<T: Scalar> DeitTiny<T> {
    pub fn new(in_channels: usize, tile_size: usize, rng: &mut ChaCha20Rng) -> Self {
        let patch_size = pick_patch_size(tile_size);
        let grid = tile_size / patch_size;
        let tokens = grid * grid + 1;
        DeitTiny {
            patch: Conv2dLayer::new(
                in_channels,
                DEIT_WIDTH,
                patch_size,
                patch_size,
                0,
                1,
                true,
                rng,
            ),
            cls: Tensor::param(init::normal(&[1, 1, DEIT_WIDTH], 0.0, 0.02, rng)),
            pos: Tensor::param(init::normal(&[1, tokens, DEIT_WIDTH], 0.0, 0.02, rng)),
            encoder: TransformerEncoder::new(DEIT_WIDTH, DEIT_DEPTH, DEIT_HEADS, 4, 0.0, rng),
            patch_size,
            grid,
        }
    }

    pub fn emb_width(&self) -> usize {
        DEIT_WIDTH
    }

    pub fn map_channels(&self) -> usize {
        DEIT_WIDTH
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    /// (N, C, s, s) -> (cls embedding (N, 192), token map (N, 192, g, g))
    pub fn forward(&self, x: &Tensor<T>, ctx: &mut Ctx) -> (Tensor<T>, Tensor<T>) {
        let n = x.shape()[0];
        let g = self.grid;
        let patches = self.patch.forward(x); // (N, W, g, g)
        let tokens = ops::reshape(&patches, &[n, DEIT_WIDTH, g * g]);
        let tokens = ops::permute(&tokens, &[0, 2, 1]); // (N, g*g, W)
        let zeros = Tensor::constant(ndarray::ArrayD::zeros(ndarray::IxDyn(&[
            n,
            1,
            DEIT_WIDTH,
        ])));
        let cls = ops::add(&zeros, &self.cls);
        let seq = ops::concat(&[cls, tokens], 1);
        let seq = ops::add(&seq, &self.pos);
        let out = self.encoder.forward(&seq, ctx);
        let emb = ops::index_axis(&out, 1, 0);
        let map = ops::slice_axis(&out, 1, 1, g * g);
        let map = ops::permute(&map, &[0, 2, 1]);
        let map = ops::reshape(&map, &[n, DEIT_WIDTH, g, g]);
        (emb, map)
    }
}

impl<T: Scalar> Module<T> for DeitTiny<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        self.patch.visit_params(&join(prefix, "patch"), f);
        f(&join(prefix, "cls"), &self.cls);
        f(&join(prefix, "pos"), &self.pos);
        self.encoder.visit_params(&join(prefix, "encoder"), f);
    }
}
