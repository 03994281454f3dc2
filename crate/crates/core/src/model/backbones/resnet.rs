use rand_chacha::ChaCha20Rng;
use smokeynet_autograd::nn::{join, BatchNorm, Conv2dLayer, Module};
use smokeynet_autograd::{ops, Scalar, Tensor};

struct BasicBlock<T: Scalar> {
    conv1: Conv2dLayer<T>,
    bn1: BatchNorm<T>,
    conv2: Conv2dLayer<T>,
    bn2: BatchNorm<T>,
    down: Option<(Conv2dLayer<T>, BatchNorm<T>)>,
}

impl<T: Scalar> BasicBlock<T> {
    fn new(cin: usize, cout: usize, stride: usize, rng: &mut ChaCha20Rng) -> Self {
        let down = (stride != 1 || cin != cout).then(|| {
            (
                Conv2dLayer::new(cin, cout, 1, stride, 0, 1, false, rng),
                BatchNorm::new(cout),
            )
        });
        BasicBlock {
            conv1: Conv2dLayer::new(cin, cout, 3, stride, 1, 1, false, rng),
            bn1: BatchNorm::new(cout),
            conv2: Conv2dLayer::new(cout, cout, 3, 1, 1, 1, false, rng),
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

struct Bottleneck<T: Scalar> {
    conv1: Conv2dLayer<T>,
    bn1: BatchNorm<T>,
    conv2: Conv2dLayer<T>,
    bn2: BatchNorm<T>,
    conv3: Conv2dLayer<T>,
    bn3: BatchNorm<T>,
    down: Option<(Conv2dLayer<T>, BatchNorm<T>)>,
}

impl<T: Scalar> Bottleneck<T> {
    fn new(cin: usize, mid: usize, cout: usize, stride: usize, rng: &mut ChaCha20Rng) -> Self {
        let down = (stride != 1 || cin != cout).then(|| {
            (
                Conv2dLayer::new(cin, cout, 1, stride, 0, 1, false, rng),
                BatchNorm::new(cout),
            )
        });
        Bottleneck {
            conv1: Conv2dLayer::new(cin, mid, 1, 1, 0, 1, false, rng),
            bn1: BatchNorm::new(mid),
            conv2: Conv2dLayer::new(mid, mid, 3, stride, 1, 1, false, rng),
            bn2: BatchNorm::new(mid),
            conv3: Conv2dLayer::new(mid, cout, 1, 1, 0, 1, false, rng),
            bn3: BatchNorm::new(cout),
            down,
        }
    }

    fn forward(&self, x: &Tensor<T>, train: bool) -> Tensor<T> {
        let h = ops::relu(&self.bn1.forward(&self.conv1.forward(x), train));
        let h = ops::relu(&self.bn2.forward(&self.conv2.forward(&h), train));
        let h = self.bn3.forward(&self.conv3.forward(&h), train);
        let skip = match &self.down {
            Some((conv, bn)) => bn.forward(&conv.forward(x), train),
            None => x.clone(),
        };
        ops::relu(&ops::add(&h, &skip))
    }
}

enum ResBlock<T: Scalar> {
    Basic(BasicBlock<T>),
    Bottleneck(Bottleneck<T>),
}

impl<T: Scalar> ResBlock<T> {
    fn forward(&self, x: &Tensor<T>, train: bool) -> Tensor<T> {
        match self {
            ResBlock::Basic(b) => b.forward(x, train),
            ResBlock::Bottleneck(b) => b.forward(x, train),
        }
    }
}

impl<T: Scalar> Module<T> for ResBlock<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        match self {
            ResBlock::Basic(b) => {
                b.conv1.visit_params(&join(prefix, "conv1"), f);
                b.bn1.visit_params(&join(prefix, "bn1"), f);
                b.conv2.visit_params(&join(prefix, "conv2"), f);
                b.bn2.visit_params(&join(prefix, "bn2"), f);
                if let Some((conv, bn)) = &b.down {
                    conv.visit_params(&join(prefix, "down_conv"), f);
                    bn.visit_params(&join(prefix, "down_bn"), f);
                }
            }
            ResBlock::Bottleneck(b) => {
                b.conv1.visit_params(&join(prefix, "conv1"), f);
                b.bn1.visit_params(&join(prefix, "bn1"), f);
                b.conv2.visit_params(&join(prefix, "conv2"), f);
                b.bn2.visit_params(&join(prefix, "bn2"), f);
                b.conv3.visit_params(&join(prefix, "conv3"), f);
                b.bn3.visit_params(&join(prefix, "bn3"), f);
                if let Some((conv, bn)) = &b.down {
                    conv.visit_params(&join(prefix, "down_conv"), f);
                    bn.visit_params(&join(prefix, "down_bn"), f);
                }
            }
        }
    }

    fn visit_buffers(
        &self,
        prefix: &str,
        f: &mut dyn FnMut(&str, &std::cell::RefCell<ndarray::ArrayD<T>>),
    ) {
        match self {
            ResBlock::Basic(b) => {
                b.bn1.visit_buffers(&join(prefix, "bn1"), f);
                b.bn2.visit_buffers(&join(prefix, "bn2"), f);
                if let Some((_, bn)) = &b.down {
                    bn.visit_buffers(&join(prefix, "down_bn"), f);
                }
            }
            ResBlock::Bottleneck(b) => {
                b.bn1.visit_buffers(&join(prefix, "bn1"), f);
                b.bn2.visit_buffers(&join(prefix, "bn2"), f);
                b.bn3.visit_buffers(&join(prefix, "bn3"), f);
                if let Some((_, bn)) = &b.down {
                    bn.visit_buffers(&join(prefix, "down_bn"), f);
                }
            }
        }
    }
}

/// Standard residual CNN: 7x7/2 stem, 3x3/2 max pool, four stages, global
/// pool. The 34-layer form uses basic blocks (512-wide embedding); the
/// 50-layer form uses bottlenecks (2048-wide).
pub struct ResNet<T: Scalar> {
    conv1: Conv2dLayer<T>,
    bn1: BatchNorm<T>,
    stages: Vec<Vec<ResBlock<T>>>,
    emb_width: usize,
}

impl<T: Scalar> ResNet<T> {
    pub fn new34(in_channels: usize, rng: &mut ChaCha20Rng) -> Self {
        Self::basic(in_channels, &[3, 4, 6, 3], rng)
    }

    pub fn new50(in_channels: usize, rng: &mut ChaCha20Rng) -> Self {
        Self::bottleneck(in_channels, &[3, 4, 6, 3], rng)
    }

    fn basic(in_channels: usize, blocks: &[usize; 4], rng: &mut ChaCha20Rng) -> Self {
        let widths = [64usize, 128, 256, 512];
        let mut stages = Vec::new();
        let mut cin = 64;
        for (si, (&width, &n)) in widths.iter().zip(blocks.iter()).enumerate() {
            let mut stage = Vec::new();
            for b in 0..n {
                let stride = if si > 0 && b == 0 { 2 } else { 1 };
                stage.push(ResBlock::Basic(BasicBlock::new(cin, width, stride, rng)));
                cin = width;
            }
            stages.push(stage);
        }
        ResNet {
            conv1: Conv2dLayer::new(in_channels, 64, 7, 2, 3, 1, false, rng),
            bn1: BatchNorm::new(64),
            stages,
            emb_width: 512,
        }
    }

    fn bottleneck(in_channels: usize, blocks: &[usize; 4], rng: &mut ChaCha20Rng) -> Self {
        let mids = [64usize, 128, 256, 512];
        let mut stages = Vec::new();
        let mut cin = 64;
        for (si, (&mid, &n)) in mids.iter().zip(blocks.iter()).enumerate() {
            let cout = mid * 4;
            let mut stage = Vec::new();
            for b in 0..n {
                let stride = if si > 0 && b == 0 { 2 } else { 1 };
                stage.push(ResBlock::Bottleneck(Bottleneck::new(
                    cin, mid, cout, stride, rng,
                )));
                cin = cout;
            }
            stages.push(stage);
        }
        ResNet {
            conv1: Conv2dLayer::new(in_channels, 64, 7, 2, 3, 1, false, rng),
            bn1: BatchNorm::new(64),
            stages,
            emb_width: 2048,
        }
    }

    pub fn emb_width(&self) -> usize {
        self.emb_width
    }

    pub fn map_channels(&self) -> usize {
        self.emb_width
    }

    /// (N, C, s, s) -> (pooled (N, E), final map (N, E, h, w))
    pub fn forward(&self, x: &Tensor<T>, train: bool) -> (Tensor<T>, Tensor<T>) {
        let h = ops::relu(&self.bn1.forward(&self.conv1.forward(x), train));
        let mut h = ops::max_pool2d(&h, 3, 2, 1);
        for stage in &self.stages {
            for block in stage {
                h = block.forward(&h, train);
            }
        }
        (ops::global_avg_pool(&h), h)
    }
}

impl<T: Scalar> Module<T> for ResNet<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        self.conv1.visit_params(&join(prefix, "conv1"), f);
        self.bn1.visit_params(&join(prefix, "bn1"), f);
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
        self.bn1.visit_buffers(&join(prefix, "bn1"), f);
        for (si, stage) in self.stages.iter().enumerate() {
            for (bi, block) in stage.iter().enumerate() {
                block.visit_buffers(&join(prefix, &format!("stage{si}.{bi}")), f);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use smokeynet_autograd::nn::{init::seed_stream, param_count};
    use ndarray::{ArrayD, IxDyn};

    #[test]
    fn resnet34_shapes_and_param_magnitude() {
        let mut rng = seed_stream(30, "rn34");
        let net = ResNet::<f32>::new34(3, &mut rng);
        let n = param_count(&net);
        // feature extractor of the standard 34-layer net is ~21.3M scalars
        assert!((20_000_000..23_000_000).contains(&n), "got {n}");
        let x = Tensor::constant(ArrayD::from_elem(IxDyn(&[2, 3, 32, 32]), 0.1f32));
        let (emb, map) = net.forward(&x, false);
        assert_eq!(emb.shape(), vec![2, 512]);
        assert_eq!(map.shape(), vec![2, 512, 1, 1]);
    }

    #[test]
    fn resnet50_embedding_width() {
        let mut rng = seed_stream(31, "rn50");
        let net = ResNet::<f32>::new50(3, &mut rng);
        assert_eq!(net.emb_width(), 2048);
        let n = param_count(&net);
        assert!((22_000_000..26_000_000).contains(&n), "got {n}");
    }
}
