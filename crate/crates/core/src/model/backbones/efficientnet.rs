use rand_chacha::ChaCha20Rng;
use smokeynet_autograd::nn::{join, BatchNorm, Conv2dLayer, Linear, Module};
use smokeynet_autograd::{ops, Scalar, Tensor};

/// SE gate with SiLU squeeze and sigmoid excite, ratio taken from the
/// block's input width.
struct SeGate<T: Scalar> {
    fc1: Linear<T>,
    fc2: Linear<T>,
}

impl<T: Scalar> SeGate<T> {
    fn new(channels: usize, squeeze: usize, rng: &mut ChaCha20Rng) -> Self {
        SeGate {
            fc1: Linear::new(channels, squeeze, true, rng),
            fc2: Linear::new(squeeze, channels, true, rng),
        }
    }

    fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let shape = x.shape();
        let (n, c) = (shape[0], shape[1]);
        let pooled = ops::global_avg_pool(x);
        let gate = ops::silu(&self.fc1.forward(&pooled));
        let gate = ops::sigmoid(&self.fc2.forward(&gate));
        ops::mul(x, &ops::reshape(&gate, &[n, c, 1, 1]))
    }
}

impl<T: Scalar> Module<T> for SeGate<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        self.fc1.visit_params(&join(prefix, "fc1"), f);
        self.fc2.visit_params(&join(prefix, "fc2"), f);
    }
}

struct MbConv<T: Scalar> {
    expand: Option<(Conv2dLayer<T>, BatchNorm<T>)>,
    depthwise: Conv2dLayer<T>,
    dw_bn: BatchNorm<T>,
    se: SeGate<T>,
    project: Conv2dLayer<T>,
    proj_bn: BatchNorm<T>,
    skip: bool,
}

impl<T: Scalar> MbConv<T> {
    fn new(
        cin: usize,
        expand_ratio: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        rng: &mut ChaCha20Rng,
    ) -> Self {
        let exp = cin * expand_ratio;
        let expand = (expand_ratio != 1).then(|| {
            (
                Conv2dLayer::new(cin, exp, 1, 1, 0, 1, false, rng),
                BatchNorm::new(exp),
            )
        });
        MbConv {
            expand,
            depthwise: Conv2dLayer::new(exp, exp, kernel, stride, kernel / 2, exp, false, rng),
            dw_bn: BatchNorm::new(exp),
            se: SeGate::new(exp, (cin / 4).max(1), rng),
            project: Conv2dLayer::new(exp, cout, 1, 1, 0, 1, false, rng),
            proj_bn: BatchNorm::new(cout),
            skip: stride == 1 && cin == cout,
        }
    }

    fn forward(&self, x: &Tensor<T>, train: bool) -> Tensor<T> {
        let mut h = match &self.expand {
            Some((conv, bn)) => ops::silu(&bn.forward(&conv.forward(x), train)),
            None => x.clone(),
        };
        h = ops::silu(&self.dw_bn.forward(&self.depthwise.forward(&h), train));
        h = self.se.forward(&h);
        h = self.proj_bn.forward(&self.project.forward(&h), train);
        if self.skip {
            ops::add(&h, x)
        } else {
            h
        }
    }
}

impl<T: Scalar> Module<T> for MbConv<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        if let Some((conv, bn)) = &self.expand {
            conv.visit_params(&join(prefix, "expand"), f);
            bn.visit_params(&join(prefix, "expand_bn"), f);
        }
        self.depthwise.visit_params(&join(prefix, "dw"), f);
        self.dw_bn.visit_params(&join(prefix, "dw_bn"), f);
        self.se.visit_params(&join(prefix, "se"), f);
        self.project.visit_params(&join(prefix, "project"), f);
        self.proj_bn.visit_params(&join(prefix, "project_bn"), f);
    }

    fn visit_buffers(
        &self,
        prefix: &str,
        f: &mut dyn FnMut(&str, &std::cell::RefCell<ndarray::ArrayD<T>>),
    ) {
        if let Some((_, bn)) = &self.expand {
            bn.visit_buffers(&join(prefix, "expand_bn"), f);
        }
        self.dw_bn.visit_buffers(&join(prefix, "dw_bn"), f);
        self.proj_bn.visit_buffers(&join(prefix, "project_bn"), f);
    }
}

/// (expand ratio, output channels, repeats, first stride, kernel)
const B0_STAGES: [(usize, usize, usize, usize, usize); 7] = [
    (1, 16, 1, 1, 3),
    (6, 24, 2, 2, 3),
    (6, 40, 2, 2, 5),
    (6, 80, 3, 2, 3),
    (6, 112, 3, 1, 5),
    (6, 192, 4, 2, 5),
    (6, 320, 1, 1, 3),
];

pub const EFFICIENTNET_EMB: usize = 1280;

pub struct EfficientNetB0<T: Scalar> {
    stem: Conv2dLayer<T>,
    stem_bn: BatchNorm<T>,
    blocks: Vec<MbConv<T>>,
    head: Conv2dLayer<T>,
    head_bn: BatchNorm<T>,
}

impl<T: Scalar> EfficientNetB0<T> {
    pub fn new(in_channels: usize, rng: &mut ChaCha20Rng) -> Self {
        let mut blocks = Vec::new();
        let mut cin = 32;
        for &(expand, cout, repeats, stride, kernel) in &B0_STAGES {
            for r in 0..repeats {
                let s = if r == 0 { stride } else { 1 };
                blocks.push(MbConv::new(cin, expand, cout, kernel, s, rng));
                cin = cout;
            }
        }
        EfficientNetB0 {
            stem: Conv2dLayer::new(in_channels, 32, 3, 2, 1, 1, false, rng),
            stem_bn: BatchNorm::new(32),
            blocks,
            head: Conv2dLayer::new(cin, EFFICIENTNET_EMB, 1, 1, 0, 1, false, rng),
            head_bn: BatchNorm::new(EFFICIENTNET_EMB),
        }
    }

    pub fn emb_width(&self) -> usize {
        EFFICIENTNET_EMB
    }

    pub fn forward(&self, x: &Tensor<T>, train: bool) -> (Tensor<T>, Tensor<T>) {
        let mut h = ops::silu(&self.stem_bn.forward(&self.stem.forward(x), train));
        for block in &self.blocks {
            h = block.forward(&h, train);
        }
        let map = ops::silu(&self.head_bn.forward(&self.head.forward(&h), train));
        (ops::global_avg_pool(&map), map)
    }
}

impl<T: Scalar> Module<T> for EfficientNetB0<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        self.stem.visit_params(&join(prefix, "stem"), f);
        self.stem_bn.visit_params(&join(prefix, "stem_bn"), f);
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit_params(&join(prefix, &format!("block{i}")), f);
        }
        self.head.visit_params(&join(prefix, "head"), f);
        self.head_bn.visit_params(&join(prefix, "head_bn"), f);
    }

    fn visit_buffers(
        &self,
        prefix: &str,
        f: &mut dyn FnMut(&str, &std::cell::RefCell<ndarray::ArrayD<T>>),
    ) {
        self.stem_bn.visit_buffers(&join(prefix, "stem_bn"), f);
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit_buffers(&join(prefix, &format!("block{i}")), f);
        }
        self.head_bn.visit_buffers(&join(prefix, "head_bn"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use smokeynet_autograd::nn::{init::seed_stream, param_count};
    use ndarray::{ArrayD, IxDyn};

    #[test]
    fn b0_shapes_and_param_magnitude() {
        let mut rng = seed_stream(34, "effb0");
        let net = EfficientNetB0::<f32>::new(3, &mut rng);
        let n = param_count(&net);
        // feature extractor of the standard B0 is ~4M scalars
        assert!((3_300_000..5_000_000).contains(&n), "got {n}");
        let x = Tensor::constant(ArrayD::from_elem(IxDyn(&[1, 3, 64, 64]), 0.1f32));
        let (emb, map) = net.forward(&x, false);
        assert_eq!(emb.shape(), vec![1, 1280]);
        assert_eq!(map.shape(), vec![1, 1280, 2, 2]);
    }
}
