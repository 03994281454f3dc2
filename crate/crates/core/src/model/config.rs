use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneKind {
    ResNet34,
    ResNet50,
    MobileNetV3L,
    MobileNetFpn,
    EfficientNetB0,
    DeitTiny,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemporalKind {
    None,
    Lstm,
    Transformer,
    Cnn3d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialKind {
    None,
    Vit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageHeadMode {
    /// Image head over the spatial aggregator's summary-token embedding.
    ClsToken,
    /// Learned single affine layer over the tile probabilities.
    TileFc,
    /// Non-learned rule: image positive iff any tile probability > 0.5.
    AnyTile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtraChannel {
    None,
    /// Separate single-channel motion stream fused before the spatial stage.
    Background,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid variant: {0}")]
    Invalid(String),
}

/// Declarative description of one architecture variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantConfig {
    pub backbone: BackboneKind,
    pub temporal: TemporalKind,
    pub spatial: SpatialKind,
    pub num_frames: usize,
    pub extra_channel: ExtraChannel,
    pub image_head_mode: ImageHeadMode,
    pub pretrained_backbone: bool,
    /// Learned tile-position information in the spatial aggregator.
    pub positional_embedding: bool,
    /// Head dropout probability (0 disables).
    pub dropout: f64,
}

impl VariantConfig {
    /// Two-frame recurrent + transformer model over a residual backbone:
    /// the primary configuration.
    pub fn flagship() -> Self {
        VariantConfig {
            backbone: BackboneKind::ResNet34,
            temporal: TemporalKind::Lstm,
            spatial: SpatialKind::Vit,
            num_frames: 2,
            extra_channel: ExtraChannel::None,
            image_head_mode: ImageHeadMode::ClsToken,
            pretrained_backbone: false,
            positional_embedding: true,
            dropout: 0.0,
        }
    }

    pub fn three_frame() -> Self {
        VariantConfig {
            num_frames: 3,
            ..Self::flagship()
        }
    }

    pub fn mobilenet() -> Self {
        VariantConfig {
            backbone: BackboneKind::MobileNetV3L,
            ..Self::flagship()
        }
    }

    pub fn mobilenet_fpn() -> Self {
        VariantConfig {
            backbone: BackboneKind::MobileNetFpn,
            ..Self::flagship()
        }
    }

    pub fn efficientnet() -> Self {
        VariantConfig {
            backbone: BackboneKind::EfficientNetB0,
            ..Self::flagship()
        }
    }

    pub fn deit_tiny() -> Self {
        VariantConfig {
            backbone: BackboneKind::DeitTiny,
            ..Self::flagship()
        }
    }

    /// Single-frame backbone-only ablation with the learned tile-vote head.
    pub fn cnn_only() -> Self {
        VariantConfig {
            temporal: TemporalKind::None,
            spatial: SpatialKind::None,
            num_frames: 1,
            image_head_mode: ImageHeadMode::TileFc,
            ..Self::flagship()
        }
    }

    pub fn cnn_lstm() -> Self {
        VariantConfig {
            spatial: SpatialKind::None,
            image_head_mode: ImageHeadMode::TileFc,
            ..Self::flagship()
        }
    }

    pub fn cnn_vit() -> Self {
        VariantConfig {
            temporal: TemporalKind::None,
            num_frames: 1,
            ..Self::flagship()
        }
    }

    pub fn transformer_temporal() -> Self {
        VariantConfig {
            temporal: TemporalKind::Transformer,
            ..Self::flagship()
        }
    }

    pub fn cnn3d() -> Self {
        VariantConfig {
            temporal: TemporalKind::Cnn3d,
            spatial: SpatialKind::None,
            image_head_mode: ImageHeadMode::TileFc,
            ..Self::flagship()
        }
    }

    pub fn background_fusion() -> Self {
        VariantConfig {
            backbone: BackboneKind::MobileNetV3L,
            extra_channel: ExtraChannel::Background,
            ..Self::flagship()
        }
    }

    pub fn resnet50_single_frame() -> Self {
        VariantConfig {
            backbone: BackboneKind::ResNet50,
            ..Self::cnn_only()
        }
    }

    /// A short display name for reports.
    pub fn name(&self) -> String {
        let backbone = match self.backbone {
            BackboneKind::ResNet34 => "ResNet34",
            BackboneKind::ResNet50 => "ResNet50",
            BackboneKind::MobileNetV3L => "MobileNet",
            BackboneKind::MobileNetFpn => "MobileNetFPN",
            BackboneKind::EfficientNetB0 => "EfficientNetB0",
            BackboneKind::DeitTiny => "TinyDeiT",
        };
        let mut parts = vec![backbone.to_string()];
        match self.temporal {
            TemporalKind::None => {}
            TemporalKind::Lstm => parts.push("LSTM".into()),
            TemporalKind::Transformer => parts.push("Transformer".into()),
            TemporalKind::Cnn3d => parts.push("ResNet18-3D".into()),
        }
        if self.spatial == SpatialKind::Vit {
            parts.push("ViT".into());
        }
        let mut name = parts.join(" + ");
        if self.extra_channel == ExtraChannel::Background {
            name.push_str(" (MOG2)");
        }
        if self.num_frames != 2 {
            name.push_str(&format!(" ({} frame{})", self.num_frames, if self.num_frames == 1 { "" } else { "s" }));
        }
        name
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(1..=3).contains(&self.num_frames) {
            return Err(ConfigError::Invalid(format!(
                "num_frames must be 1, 2 or 3, got {}",
                self.num_frames
            )));
        }
        match self.spatial {
            SpatialKind::Vit if self.image_head_mode != ImageHeadMode::ClsToken => {
                return Err(ConfigError::Invalid(
                    "spatial=vit requires image_head_mode=cls_token".into(),
                ));
            }
            SpatialKind::None if self.image_head_mode == ImageHeadMode::ClsToken => {
                return Err(ConfigError::Invalid(
                    "image_head_mode=cls_token requires spatial=vit".into(),
                ));
            }
            _ => {}
        }
        if self.temporal == TemporalKind::Cnn3d && self.spatial != SpatialKind::None {
            return Err(ConfigError::Invalid(
                "temporal=cnn3d replaces the spatial aggregator; spatial must be none".into(),
            ));
        }
        if (self.num_frames == 1) != (self.temporal == TemporalKind::None) {
            return Err(ConfigError::Invalid(format!(
                "num_frames={} is inconsistent with temporal={:?}: single-frame models drop the \
                 temporal stage and multi-frame models need one",
                self.num_frames, self.temporal
            )));
        }
        if self.extra_channel == ExtraChannel::Background && self.num_frames < 2 {
            return Err(ConfigError::Invalid(
                "the background stream needs at least two frames of motion".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ConfigError::Invalid(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }
}
