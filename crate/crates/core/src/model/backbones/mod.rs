mod deit;
mod efficientnet;
mod fpn;
mod mobilenet;
mod resnet;

pub use deit::DeitTiny;
pub use efficientnet::{EfficientNetB0, EFFICIENTNET_EMB};
pub use fpn::{
    FpnNeck, MobileNetFpn, FPN_CONCAT_FEATURES, FPN_LEVELS, FPN_MAP_FEATURES, FPN_OUT_FEATURES,
};
pub use mobilenet::{MobileNetV3, MOBILENET_EMB};
pub use resnet::ResNet;

use smokeynet_autograd::nn::{join, Ctx, Module};
use smokeynet_autograd::{Scalar, Tensor};

use super::config::BackboneKind;

/// One per-tile feature extractor behind a uniform interface: a pooled
/// embedding plus the final spatial feature map (consumed by the 3-D
/// temporal aggregator).
pub enum BackboneNet<T: Scalar> {
    ResNet(ResNet<T>),
    MobileNet(MobileNetV3<T>),
    Fpn(MobileNetFpn<T>),
    EfficientNet(EfficientNetB0<T>),
    Deit(DeitTiny<T>),
}

impl<T: Scalar> BackboneNet<T> {
    pub fn build(
        kind: BackboneKind,
        in_channels: usize,
        tile_size: usize,
        rng: &mut rand_chacha::ChaCha20Rng,
    ) -> Self {
        match kind {
            BackboneKind::ResNet34 => BackboneNet::ResNet(ResNet::new34(in_channels, rng)),
            BackboneKind::ResNet50 => BackboneNet::ResNet(ResNet::new50(in_channels, rng)),
            BackboneKind::MobileNetV3L => BackboneNet::MobileNet(MobileNetV3::new(in_channels, rng)),
            BackboneKind::MobileNetFpn => BackboneNet::Fpn(MobileNetFpn::new(in_channels, rng)),
            BackboneKind::EfficientNetB0 => {
                BackboneNet::EfficientNet(EfficientNetB0::new(in_channels, rng))
            }
            BackboneKind::DeitTiny => BackboneNet::Deit(DeitTiny::new(in_channels, tile_size, rng)),
        }
    }

    pub fn emb_width(&self) -> usize {
        match self {
            BackboneNet::ResNet(n) => n.emb_width(),
            BackboneNet::MobileNet(n) => n.emb_width(),
            BackboneNet::Fpn(n) => n.emb_width(),
            BackboneNet::EfficientNet(n) => n.emb_width(),
            BackboneNet::Deit(n) => n.emb_width(),
        }
    }

    /// (N, C, s, s) -> (embeddings (N, E), maps (N, Cm, h, w))
    pub fn forward(&self, x: &Tensor<T>, ctx: &mut Ctx) -> (Tensor<T>, Tensor<T>) {
        match self {
            BackboneNet::ResNet(n) => n.forward(x, ctx.train),
            BackboneNet::MobileNet(n) => n.forward(x, ctx.train),
            BackboneNet::Fpn(n) => n.forward(x, ctx.train),
            BackboneNet::EfficientNet(n) => n.forward(x, ctx.train),
            BackboneNet::Deit(n) => n.forward(x, ctx),
        }
    }
}

impl<T: Scalar> Module<T> for BackboneNet<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        match self {
            BackboneNet::ResNet(n) => n.visit_params(&join(prefix, "resnet"), f),
            BackboneNet::MobileNet(n) => n.visit_params(&join(prefix, "mobilenet"), f),
            BackboneNet::Fpn(n) => n.visit_params(&join(prefix, "fpn"), f),
            BackboneNet::EfficientNet(n) => n.visit_params(&join(prefix, "efficientnet"), f),
            BackboneNet::Deit(n) => n.visit_params(&join(prefix, "deit"), f),
        }
    }

    fn visit_buffers(
        &self,
        prefix: &str,
        f: &mut dyn FnMut(&str, &std::cell::RefCell<ndarray::ArrayD<T>>),
    ) {
        match self {
            BackboneNet::ResNet(n) => n.visit_buffers(&join(prefix, "resnet"), f),
            BackboneNet::MobileNet(n) => n.visit_buffers(&join(prefix, "mobilenet"), f),
            BackboneNet::Fpn(n) => n.visit_buffers(&join(prefix, "fpn"), f),
            BackboneNet::EfficientNet(n) => n.visit_buffers(&join(prefix, "efficientnet"), f),
            BackboneNet::Deit(_) => {}
        }
    }
}
