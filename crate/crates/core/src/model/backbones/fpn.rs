use rand_chacha::ChaCha20Rng;
use smokeynet_autograd::nn::{join, Conv2dLayer, Linear, Module};
use smokeynet_autograd::{ops, Scalar, Tensor};

use super::mobilenet::{MobileNetV3, MOBILENET_C4_CHANNELS, MOBILENET_C5_CHANNELS, MOBILENET_EMB};

/// Pyramid head over the mobile backbone: three 256-channel maps at 7x7,
/// 7x7 and 4x4, each channel-reduced by two 1x1 convolutions so it flattens
/// to exactly 784 features, concatenated to 2352 and linearly reduced to
/// 960 to match the plain backbone's embedding width.
pub struct FpnNeck<T: Scalar> {
    lateral: [Conv2dLayer<T>; 3],
    reduce_a: [Conv2dLayer<T>; 3],
    reduce_b: [Conv2dLayer<T>; 3],
    out: Linear<T>,
}

pub const FPN_LATERAL_CHANNELS: usize = 256;
pub const FPN_MAP_FEATURES: usize = 784;
pub const FPN_CONCAT_FEATURES: usize = 3 * FPN_MAP_FEATURES;
pub const FPN_OUT_FEATURES: usize = MOBILENET_EMB;
/// (spatial size, final channels) per pyramid level: 16*49 = 49*16 = 784.
pub const FPN_LEVELS: [(usize, usize); 3] = [(7, 16), (7, 16), (4, 49)];

impl<T: Scalar> FpnNeck<T> {
    pub fn new(rng: &mut ChaCha20Rng) -> Self {
        let mid = [64usize, 64, 112];
        let lateral = [
            Conv2dLayer::new(MOBILENET_C4_CHANNELS, FPN_LATERAL_CHANNELS, 1, 1, 0, 1, true, rng),
            Conv2dLayer::new(MOBILENET_C5_CHANNELS, FPN_LATERAL_CHANNELS, 1, 1, 0, 1, true, rng),
            Conv2dLayer::new(MOBILENET_C5_CHANNELS, FPN_LATERAL_CHANNELS, 1, 1, 0, 1, true, rng),
        ];
        let reduce_a = [
            Conv2dLayer::new(FPN_LATERAL_CHANNELS, mid[0], 1, 1, 0, 1, true, rng),
            Conv2dLayer::new(FPN_LATERAL_CHANNELS, mid[1], 1, 1, 0, 1, true, rng),
            Conv2dLayer::new(FPN_LATERAL_CHANNELS, mid[2], 1, 1, 0, 1, true, rng),
        ];
        let reduce_b = [
            Conv2dLayer::new(mid[0], FPN_LEVELS[0].1, 1, 1, 0, 1, true, rng),
            Conv2dLayer::new(mid[1], FPN_LEVELS[1].1, 1, 1, 0, 1, true, rng),
            Conv2dLayer::new(mid[2], FPN_LEVELS[2].1, 1, 1, 0, 1, true, rng),
        ];
        FpnNeck {
            lateral,
            reduce_a,
            reduce_b,
            out: Linear::new(FPN_CONCAT_FEATURES, FPN_OUT_FEATURES, true, rng),
        }
    }

    /// (c4 at 1/16, c5 at 1/32) -> 960-wide embedding; also returns the
    /// per-level flattened widths for contract checks.
    pub fn forward(&self, c4: &Tensor<T>, c5: &Tensor<T>) -> (Tensor<T>, [usize; 3]) {
        let sources = [c4, c5, c5];
        let mut flats = Vec::with_capacity(3);
        let mut widths = [0usize; 3];
        for (i, src) in sources.into_iter().enumerate() {
            let (size, _chans) = FPN_LEVELS[i];
            let lat = ops::relu(&self.lateral[i].forward(src));
            let lat = ops::adaptive_avg_pool2d(&lat, size, size);
            let red = ops::relu(&self.reduce_a[i].forward(&lat));
            let red = self.reduce_b[i].forward(&red);
            let n = red.shape()[0];
            let flat_width: usize = red.shape()[1..].iter().product();
            widths[i] = flat_width;
            flats.push(ops::reshape(&red, &[n, flat_width]));
        }
        let concat = ops::concat(&flats, 1);
        (self.out.forward(&concat), widths)
    }
}

impl<T: Scalar> Module<T> for FpnNeck<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        for i in 0..3 {
            self.lateral[i].visit_params(&join(prefix, &format!("lateral{i}")), f);
            self.reduce_a[i].visit_params(&join(prefix, &format!("reduce_a{i}")), f);
            self.reduce_b[i].visit_params(&join(prefix, &format!("reduce_b{i}")), f);
        }
        self.out.visit_params(&join(prefix, "out"), f);
    }
}

/// Mobile backbone with the pyramid neck replacing global pooling.
pub struct MobileNetFpn<T: Scalar> {
    pub backbone: MobileNetV3<T>,
    pub neck: FpnNeck<T>,
}

impl<T: Scalar> MobileNetFpn<T> {
    pub fn new(in_channels: usize, rng: &mut ChaCha20Rng) -> Self {
        MobileNetFpn {
            backbone: MobileNetV3::new(in_channels, rng),
            neck: FpnNeck::new(rng),
        }
    }

    pub fn emb_width(&self) -> usize {
        FPN_OUT_FEATURES
    }

    pub fn forward(&self, x: &Tensor<T>, train: bool) -> (Tensor<T>, Tensor<T>) {
        let taps = self.backbone.forward_taps(x, train);
        let (emb, widths) = self.neck.forward(&taps.c4, &taps.c5);
        debug_assert_eq!(widths, [FPN_MAP_FEATURES; 3]);
        (emb, taps.map)
    }
}

impl<T: Scalar> Module<T> for MobileNetFpn<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        self.backbone.visit_params(&join(prefix, "backbone"), f);
        self.neck.visit_params(&join(prefix, "neck"), f);
    }

    fn visit_buffers(
        &self,
        prefix: &str,
        f: &mut dyn FnMut(&str, &std::cell::RefCell<ndarray::ArrayD<T>>),
    ) {
        self.backbone.visit_buffers(&join(prefix, "backbone"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use smokeynet_autograd::nn::init::seed_stream;
    use ndarray::{ArrayD, IxDyn};

    #[test]
    fn fpn_widths_are_784_2352_960() {
        let mut rng = seed_stream(36, "fpn");
        let net = MobileNetFpn::<f32>::new(3, &mut rng);
        let x = Tensor::constant(ArrayD::from_elem(IxDyn(&[1, 3, 64, 64]), 0.1f32));
        let taps = net.backbone.forward_taps(&x, false);
        let (emb, widths) = net.neck.forward(&taps.c4, &taps.c5);
        assert_eq!(widths, [784, 784, 784]);
        assert_eq!(FPN_CONCAT_FEATURES, 2352);
        assert_eq!(emb.shape(), vec![1, 960]);
    }

    #[test]
    fn level_channel_arithmetic() {
        // 16 channels * 7*7 = 784 and 49 channels * 4*4 = 784
        for (size, ch) in FPN_LEVELS {
            assert_eq!(size * size * ch, FPN_MAP_FEATURES);
        }
    }
}
