use rand_chacha::ChaCha20Rng;
use smokeynet_autograd::nn::{
    init, join, BatchNorm, Conv3dLayer, Ctx, Lstm, Module, TransformerEncoder,
};
use smokeynet_autograd::{ops, Scalar, Tensor};

/// Aggregates each tile's per-frame information into one embedding.
pub enum TemporalNet<T: Scalar> {
    /// Single-layer LSTM over the frame sequence, hidden width = embedding
    /// width; the final hidden state is the aggregate.
    Lstm(Lstm<T>),
    /// Small transformer over the frame sequence with a learned temporal
    /// position embedding; the last frame's output token is the aggregate.
    Transformer {
        pos: Tensor<T>,
        encoder: TransformerEncoder<T>,
    },
    /// 3-D residual network over the stacked per-frame feature maps,
    /// replacing both the recurrent and the spatial aggregators.
    Cnn3d(ResNet3d<T>),
}

pub const TEMPORAL_TRANSFORMER_DEPTH: usize = 2;
pub const TEMPORAL_TRANSFORMER_HEADS: usize = 8;

impl<T: Scalar> TemporalNet<T> {
    pub fn lstm(width: usize, rng: &mut ChaCha20Rng) -> Self {
        TemporalNet::Lstm(Lstm::new(width, width, rng))
    }

    pub fn transformer(width: usize, num_frames: usize, rng: &mut ChaCha20Rng) -> Self {
        let heads = if width % TEMPORAL_TRANSFORMER_HEADS == 0 {
            TEMPORAL_TRANSFORMER_HEADS
        } else {
            1
        };
        TemporalNet::Transformer {
            pos: Tensor::param(init::normal(&[1, num_frames, width], 0.0, 0.02, rng)),
            encoder: TransformerEncoder::new(
                width,
                TEMPORAL_TRANSFORMER_DEPTH,
                heads,
                4,
                0.0,
                rng,
            ),
        }
    }

    pub fn cnn3d(map_channels: usize, rng: &mut ChaCha20Rng) -> Self {
        TemporalNet::Cnn3d(ResNet3d::new(map_channels, rng))
    }

    /// Embedding width produced by this aggregator given the input width.
    pub fn out_width(&self, in_width: usize) -> usize {
        match self {
            TemporalNet::Lstm(l) => l.hidden,
            TemporalNet::Transformer { .. } => in_width,
            TemporalNet::Cnn3d(r) => r.out_width(),
        }
    }

    /// Sequence aggregation: (N, F, E) -> (N, E).
    pub fn forward_seq(&self, x: &Tensor<T>, ctx: &mut Ctx) -> Tensor<T> {
        match self {
            TemporalNet::Lstm(l) => l.forward(x),
            TemporalNet::Transformer { pos, encoder } => {
                let frames = x.shape()[1];
                let tokens = ops::add(x, pos);
                let out = encoder.forward(&tokens, ctx);
                ops::index_axis(&out, 1, frames - 1)
            }
            TemporalNet::Cnn3d(_) => panic!("3d aggregator consumes feature maps, not sequences"),
        }
    }
}

impl<T: Scalar> Module<T> for TemporalNet<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        match self {
            TemporalNet::Lstm(l) => l.visit_params(&join(prefix, "lstm"), f),
            TemporalNet::Transformer { pos, encoder } => {
                f(&join(prefix, "pos"), pos);
                encoder.visit_params(&join(prefix, "encoder"), f);
            }
            TemporalNet::Cnn3d(r) => r.visit_params(&join(prefix, "cnn3d"), f),
        }
    }

    fn visit_buffers(
        &self,
        prefix: &str,
        f: &mut dyn FnMut(&str, &std::cell::RefCell<ndarray::ArrayD<T>>),
    ) {
        if let TemporalNet::Cnn3d(r) = self {
            r.visit_buffers(&join(prefix, "cnn3d"), f);
        }
    }
}

struct BasicBlock3d<T: Scalar> {
    conv1: Conv3dLayer<T>,
    bn1: BatchNorm<T>,
    conv2: Conv3dLayer<T>,
    bn2: BatchNorm<T>,
    down: Option<(Conv3dLayer<T>, BatchNorm<T>)>,
}

impl<T: Scalar> BasicBlock3d<T> {
    fn new(cin: usize, cout: usize, spatial_stride: usize, rng: &mut ChaCha20Rng) -> Self {
        let stride = (1, spatial_stride, spatial_stride);
        let down = (spatial_stride != 1 || cin != cout).then(|| {
            (
                Conv3dLayer::new(cin, cout, (1, 1, 1), stride, (0, 0, 0), false, rng),
                BatchNorm::new(cout),
            )
        });
        BasicBlock3d {
            conv1: Conv3dLayer::new(cin, cout, (3, 3, 3), stride, (1, 1, 1), false, rng),
            bn1: BatchNorm::new(cout),
            conv2: Conv3dLayer::new(cout, cout, (3, 3, 3), (1, 1, 1), (1, 1, 1), false, rng),
            bn2: BatchNorm::new(cout),
            down,
        }
    }

    fn forward(&self, x: &Tensor<T>, train: bool) -> Tensor<T> {
        let h = ops::relu(&self.bn1.forward(&self.conv1.forward(x), train));
        let h = self.bn2.forward(&self.conv2.forward(&h), train);
        let skip = match &self.down {
            Some((conv, bn)) => bn.forward(&conv.forward(x), train),
            None => x.clone(),
        };
        ops::relu(&ops::add(&h, &skip))
    }
}

impl<T: Scalar> Module<T> for BasicBlock3d<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        self.conv1.visit_params(&join(prefix, "conv1"), f);
        self.bn1.visit_params(&join(prefix, "bn1"), f);
        self.conv2.visit_params(&join(prefix, "conv2"), f);
        self.bn2.visit_params(&join(prefix, "bn2"), f);
        if let Some((conv, bn)) = &self.down {
            conv.visit_params(&join(prefix, "down_conv"), f);
            bn.visit_params(&join(prefix, "down_bn"), f);
        }
    }

    fn visit_buffers(
        &self,
        prefix: &str,
        f: &mut dyn FnMut(&str, &std::cell::RefCell<ndarray::ArrayD<T>>),
    ) {
        self.bn1.visit_buffers(&join(prefix, "bn1"), f);
        self.bn2.visit_buffers(&join(prefix, "bn2"), f);
        if let Some((_, bn)) = &self.down {
            bn.visit_buffers(&join(prefix, "down_bn"), f);
        }
    }
}

/// 18-layer-style 3-D residual stack over (N, C, F, h, w) feature-map clips.
/// Temporal stride stays 1 (clips are 2-3 frames); spatial strides follow
/// the usual 4-stage doubling to a 512-wide global-pooled embedding.
pub struct ResNet3d<T: Scalar> {
    stem: Conv3dLayer<T>,
    stem_bn: BatchNorm<T>,
    stages: Vec<Vec<BasicBlock3d<T>>>,
}

const R3D_WIDTHS: [usize; 4] = [64, 128, 256, 512];
const R3D_BLOCKS: [usize; 4] = [2, 2, 2, 2];

impl<T: Scalar> ResNet3d<T> {
    pub fn new(in_channels: usize, rng: &mut ChaCha20Rng) -> Self {
        let stem = Conv3dLayer::new(
            in_channels,
            R3D_WIDTHS[0],
            (3, 3, 3),
            (1, 1, 1),
            (1, 1, 1),
            false,
            rng,
        );
        let mut stages = Vec::new();
        let mut cin = R3D_WIDTHS[0];
        for (si, (&width, &blocks)) in R3D_WIDTHS.iter().zip(R3D_BLOCKS.iter()).enumerate() {
            let mut stage = Vec::new();
            for b in 0..blocks {
                let stride = if si > 0 && b == 0 { 2 } else { 1 };
                stage.push(BasicBlock3d::new(cin, width, stride, rng));
                cin = width;
            }
            stages.push(stage);
        }
        ResNet3d {
            stem,
            stem_bn: BatchNorm::new(R3D_WIDTHS[0]),
            stages,
        }
    }

    pub fn out_width(&self) -> usize {
        R3D_WIDTHS[3]
    }

    /// (N, C, F, h, w) -> (N, 512)
    pub fn forward(&self, x: &Tensor<T>, ctx: &Ctx) -> Tensor<T> {
        let mut h = ops::relu(&self.stem_bn.forward(&self.stem.forward(x), ctx.train));
        for stage in &self.stages {
            for block in stage {
                h = block.forward(&h, ctx.train);
            }
        }
        ops::global_avg_pool(&h)
    }
}

impl<T: Scalar> Module<T> for ResNet3d<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        self.stem.visit_params(&join(prefix, "stem"), f);
        self.stem_bn.visit_params(&join(prefix, "stem_bn"), f);
        for (si, stage) in self.stages.iter().enumerate() {
            for (bi, block) in stage.iter().enumerate() {
                block.visit_params(&join(prefix, &format!("stage{si}.{bi}")), f);
            }
        }
    }

    fn visit_buffers(
        &self,
        prefix: &str,
        f: &mut dyn FnMut(&str, &std::cell::RefCell<ndarray::ArrayD<T>>),
    ) {
        self.stem_bn.visit_buffers(&join(prefix, "stem_bn"), f);
        for (si, stage) in self.stages.iter().enumerate() {
            for (bi, block) in stage.iter().enumerate() {
                block.visit_buffers(&join(prefix, &format!("stage{si}.{bi}")), f);
            }
        }
    }
}
