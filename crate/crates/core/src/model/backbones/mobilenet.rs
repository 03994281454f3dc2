use rand_chacha::ChaCha20Rng;
use smokeynet_autograd::nn::{join, BatchNorm, Conv2dLayer, Linear, Module};
use smokeynet_autograd::{ops, Scalar, Tensor};

/// Squeeze-and-excitation: global pool, bottleneck MLP, hard-sigmoid gate.
pub(crate) struct SqueezeExcite<T: Scalar> {
    fc1: Linear<T>,
    fc2: Linear<T>,
}

impl<T: Scalar> SqueezeExcite<T> {
    pub(crate) fn new(channels: usize, squeeze: usize, rng: &mut ChaCha20Rng) -> Self {
        SqueezeExcite {
            fc1: Linear::new(channels, squeeze, true, rng),
            fc2: Linear::new(squeeze, channels, true, rng),
        }
    }

    pub(crate) fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let shape = x.shape();
        let (n, c) = (shape[0], shape[1]);
        let pooled = ops::global_avg_pool(x); // (N, C)
        let gate = ops::relu(&self.fc1.forward(&pooled));
        let gate = ops::hardsigmoid(&self.fc2.forward(&gate));
        let gate = ops::reshape(&gate, &[n, c, 1, 1]);
        ops::mul(x, &gate)
    }
}

impl<T: Scalar> Module<T> for SqueezeExcite<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        self.fc1.visit_params(&join(prefix, "fc1"), f);
        self.fc2.visit_params(&join(prefix, "fc2"), f);
    }
}

fn act<T: Scalar>(x: &Tensor<T>, hardswish: bool) -> Tensor<T> {
    if hardswish {
        ops::hardswish(x)
    } else {
        ops::relu(x)
    }
}

/// Inverted-residual bottleneck: expand 1x1, depthwise kxk, optional SE,
/// project 1x1, with a skip when the shape is preserved.
struct Bneck<T: Scalar> {
    expand: Option<(Conv2dLayer<T>, BatchNorm<T>)>,
    depthwise: Conv2dLayer<T>,
    dw_bn: BatchNorm<T>,
    se: Option<SqueezeExcite<T>>,
    project: Conv2dLayer<T>,
    proj_bn: BatchNorm<T>,
    hardswish: bool,
    skip: bool,
}

impl<T: Scalar> Bneck<T> {
    #[allow(clippy::too_many_arguments)]
    fn new(
        cin: usize,
        exp: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        se: bool,
        hardswish: bool,
        rng: &mut ChaCha20Rng,
    ) -> Self {
        let expand = (exp != cin).then(|| {
            (
                Conv2dLayer::new(cin, exp, 1, 1, 0, 1, false, rng),
                BatchNorm::new(exp),
            )
        });
        Bneck {
            expand,
            depthwise: Conv2dLayer::new(exp, exp, kernel, stride, kernel / 2, exp, false, rng),
            dw_bn: BatchNorm::new(exp),
            se: se.then(|| SqueezeExcite::new(exp, (exp / 4).max(1), rng)),
            project: Conv2dLayer::new(exp, cout, 1, 1, 0, 1, false, rng),
            proj_bn: BatchNorm::new(cout),
            hardswish,
            skip: stride == 1 && cin == cout,
        }
    }

    fn forward(&self, x: &Tensor<T>, train: bool) -> Tensor<T> {
        let mut h = match &self.expand {
            Some((conv, bn)) => act(&bn.forward(&conv.forward(x), train), self.hardswish),
            None => x.clone(),
        };
        h = act(
            &self.dw_bn.forward(&self.depthwise.forward(&h), train),
            self.hardswish,
        );
        if let Some(se) = &self.se {
            h = se.forward(&h);
        }
        h = self.proj_bn.forward(&self.project.forward(&h), train);
        if self.skip {
            ops::add(&h, x)
        } else {
            h
        }
    }
}

impl<T: Scalar> Module<T> for Bneck<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        if let Some((conv, bn)) = &self.expand {
            conv.visit_params(&join(prefix, "expand"), f);
            bn.visit_params(&join(prefix, "expand_bn"), f);
        }
        self.depthwise.visit_params(&join(prefix, "dw"), f);
        self.dw_bn.visit_params(&join(prefix, "dw_bn"), f);
        if let Some(se) = &self.se {
            se.visit_params(&join(prefix, "se"), f);
        }
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

/// Per-block config: kernel, expansion width, output width, SE, hardswish,
/// stride. The large variant's standard 15-block schedule.
const LARGE_BLOCKS: [(usize, usize, usize, bool, bool, usize); 15] = [
    (3, 16, 16, false, false, 1),
    (3, 64, 24, false, false, 2),
    (3, 72, 24, false, false, 1),
    (5, 72, 40, true, false, 2),
    (5, 120, 40, true, false, 1),
    (5, 120, 40, true, false, 1),
    (3, 240, 80, false, true, 2),
    (3, 200, 80, false, true, 1),
    (3, 184, 80, false, true, 1),
    (3, 184, 80, false, true, 1),
    (3, 480, 112, true, true, 1),
    (3, 672, 112, true, true, 1),
    (5, 672, 160, true, true, 2),
    (5, 960, 160, true, true, 1),
    (5, 960, 160, true, true, 1),
];

/// Indices of the blocks whose outputs feed the pyramid taps: the last
/// stride-16 block (112 channels) and the last stride-32 block (160).
const TAP_C4: usize = 11;
const TAP_C5: usize = 14;

pub struct MobileNetV3<T: Scalar> {
    stem: Conv2dLayer<T>,
    stem_bn: BatchNorm<T>,
    blocks: Vec<Bneck<T>>,
    head: Conv2dLayer<T>,
    head_bn: BatchNorm<T>,
}

/// Intermediate maps exposed for the pyramid variant.
pub struct MobileNetTaps<T: Scalar> {
    pub emb: Tensor<T>,
    pub map: Tensor<T>,
    /// 112-channel map at 1/16 scale.
    pub c4: Tensor<T>,
    /// 160-channel map at 1/32 scale.
    pub c5: Tensor<T>,
}

pub const MOBILENET_EMB: usize = 960;
pub const MOBILENET_C4_CHANNELS: usize = 112;
pub const MOBILENET_C5_CHANNELS: usize = 160;

impl<T: Scalar> MobileNetV3<T> {
    pub fn new(in_channels: usize, rng: &mut ChaCha20Rng) -> Self {
        let mut blocks = Vec::new();
        let mut cin = 16;
        for &(k, exp, cout, se, hs, stride) in &LARGE_BLOCKS {
            blocks.push(Bneck::new(cin, exp, cout, k, stride, se, hs, rng));
            cin = cout;
        }
        MobileNetV3 {
            stem: Conv2dLayer::new(in_channels, 16, 3, 2, 1, 1, false, rng),
            stem_bn: BatchNorm::new(16),
            blocks,
            head: Conv2dLayer::new(cin, MOBILENET_EMB, 1, 1, 0, 1, false, rng),
            head_bn: BatchNorm::new(MOBILENET_EMB),
        }
    }

    pub fn emb_width(&self) -> usize {
        MOBILENET_EMB
    }

    pub fn forward_taps(&self, x: &Tensor<T>, train: bool) -> MobileNetTaps<T> {
        let mut h = ops::hardswish(&self.stem_bn.forward(&self.stem.forward(x), train));
        let mut c4 = None;
        let mut c5 = None;
        for (i, block) in self.blocks.iter().enumerate() {
            h = block.forward(&h, train);
            if i == TAP_C4 {
                c4 = Some(h.clone());
            }
            if i == TAP_C5 {
                c5 = Some(h.clone());
            }
        }
        let map = ops::hardswish(&self.head_bn.forward(&self.head.forward(&h), train));
        MobileNetTaps {
            emb: ops::global_avg_pool(&map),
            map,
            c4: c4.expect("c4 tap"),
            c5: c5.expect("c5 tap"),
        }
    }

    pub fn forward(&self, x: &Tensor<T>, train: bool) -> (Tensor<T>, Tensor<T>) {
        let taps = self.forward_taps(x, train);
        (taps.emb, taps.map)
    }
}

impl<T: Scalar> Module<T> for MobileNetV3<T> {
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
