//! Flat key-value configuration files: `section.key = value` lines with `#`
//! comments. Sections are data.*, model.*, train.*, eval.*, synth.*; every
//! training and variant field is addressable and unknown keys are rejected.

use std::path::{Path, PathBuf};

use smokeynet_core::figlib::OffsetPattern;
use smokeynet_core::model::{
    BackboneKind, ExtraChannel, ImageHeadMode, SpatialKind, TemporalKind, VariantConfig,
};
use smokeynet_core::preprocess::GeometryConfig;

use crate::data::PipelineConfig;
use crate::synth::SyntheticSpec;
use crate::trainer::TrainConfig;
use crate::HarnessError;

#[derive(Debug, Clone)]
pub struct DataConfig {
    pub archive: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub geometry: GeometryConfig,
    pub tile_threshold: u32,
    pub offset_pattern: OffsetPattern,
    pub augment: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            archive: None,
            manifest: None,
            geometry: GeometryConfig::full(),
            tile_threshold: smokeynet_core::preprocess::TILE_PIXEL_THRESHOLD,
            offset_pattern: OffsetPattern::SignedToken,
            augment: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub split: String,
    pub latency_warmup: usize,
    pub latency_trials: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            split: "test".into(),
            latency_warmup: 1,
            latency_trials: 3,
        }
    }
}

/// Everything a run can configure, with spec defaults.
#[derive(Debug, Clone)]
pub struct Config {
    pub data: DataConfig,
    pub variant: VariantConfig,
    pub pretrained_weights: Option<PathBuf>,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub synth: SyntheticSpec,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            data: DataConfig::default(),
            variant: VariantConfig::flagship(),
            pretrained_weights: None,
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            synth: SyntheticSpec::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, HarnessError> {
    value
        .parse::<T>()
        .map_err(|_| HarnessError::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, HarnessError> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(HarnessError::Config(format!(
            "{key}: expected a boolean, got {value:?}"
        ))),
    }
}

pub fn backbone_by_name(name: &str) -> Result<BackboneKind, HarnessError> {
    Ok(match name {
        "resnet34" => BackboneKind::ResNet34,
        "resnet50" => BackboneKind::ResNet50,
        "mobilenet" | "mobilenet_v3l" => BackboneKind::MobileNetV3L,
        "mobilenet_fpn" => BackboneKind::MobileNetFpn,
        "efficientnet_b0" | "efficientnet" => BackboneKind::EfficientNetB0,
        "deit_tiny" => BackboneKind::DeitTiny,
        other => {
            return Err(HarnessError::Config(format!(
                "unknown backbone {other:?} (resnet34, resnet50, mobilenet, mobilenet_fpn, \
                 efficientnet_b0, deit_tiny)"
            )))
        }
    })
}

/// Named variants understood by `--variant`.
pub fn variant_by_name(name: &str) -> Result<VariantConfig, HarnessError> {
    Ok(match name {
        "flagship" => VariantConfig::flagship(),
        "three_frame" => VariantConfig::three_frame(),
        "mobilenet" => VariantConfig::mobilenet(),
        "mobilenet_fpn" => VariantConfig::mobilenet_fpn(),
        "efficientnet" => VariantConfig::efficientnet(),
        "deit_tiny" => VariantConfig::deit_tiny(),
        "cnn_only" => VariantConfig::cnn_only(),
        "cnn_lstm" => VariantConfig::cnn_lstm(),
        "cnn_vit" => VariantConfig::cnn_vit(),
        "transformer_temporal" => VariantConfig::transformer_temporal(),
        "cnn3d" => VariantConfig::cnn3d(),
        "background_fusion" => VariantConfig::background_fusion(),
        "resnet50" => VariantConfig::resnet50_single_frame(),
        other => {
            return Err(HarnessError::Config(format!(
                "unknown variant {other:?} (flagship, three_frame, mobilenet, mobilenet_fpn, \
                 efficientnet, deit_tiny, cnn_only, cnn_lstm, cnn_vit, transformer_temporal, \
                 cnn3d, background_fusion, resnet50)"
            )))
        }
    })
}

impl Config {
    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Config::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(HarnessError::Config(format!(
                    "{}:{}: expected key = value",
                    path.display(),
                    lineno + 1
                )));
            };
            cfg.apply(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    /// Apply one dotted key. Unknown keys are rejected with the key named.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        match key {
            "data.archive" => self.data.archive = Some(PathBuf::from(value)),
            "data.manifest" => self.data.manifest = Some(PathBuf::from(value)),
            "data.geometry" => {
                self.data.geometry = match value {
                    "full" => GeometryConfig::full(),
                    "quarter" => GeometryConfig::quarter(),
                    "desk" => PipelineConfig::desk().geometry,
                    other => {
                        return Err(HarnessError::Config(format!(
                            "data.geometry: unknown preset {other:?} (full, quarter, desk)"
                        )))
                    }
                }
            }
            "data.tile_threshold" => self.data.tile_threshold = parse(key, value)?,
            "data.offset_pattern" => {
                self.data.offset_pattern = if value == "signed" {
                    OffsetPattern::SignedToken
                } else if let Some(prefix) = value.strip_prefix("prefix:") {
                    OffsetPattern::Prefixed(prefix.to_string())
                } else {
                    return Err(HarnessError::Config(format!(
                        "data.offset_pattern: {value:?} (signed or prefix:<token>)"
                    )));
                }
            }
            "data.augment" => self.data.augment = parse_bool(key, value)?,
            "model.backbone" => self.variant.backbone = backbone_by_name(value)?,
            "model.temporal" => {
                self.variant.temporal = match value {
                    "none" => TemporalKind::None,
                    "lstm" => TemporalKind::Lstm,
                    "transformer" => TemporalKind::Transformer,
                    "cnn3d" => TemporalKind::Cnn3d,
                    other => {
                        return Err(HarnessError::Config(format!(
                            "model.temporal: unknown aggregator {other:?}"
                        )))
                    }
                }
            }
            "model.spatial" => {
                self.variant.spatial = match value {
                    "none" => SpatialKind::None,
                    "vit" => SpatialKind::Vit,
                    other => {
                        return Err(HarnessError::Config(format!(
                            "model.spatial: unknown aggregator {other:?}"
                        )))
                    }
                }
            }
            "model.frames" => self.variant.num_frames = parse(key, value)?,
            "model.extra_channel" => {
                self.variant.extra_channel = match value {
                    "none" => ExtraChannel::None,
                    "background" => ExtraChannel::Background,
                    other => {
                        return Err(HarnessError::Config(format!(
                            "model.extra_channel: {other:?} (none, background)"
                        )))
                    }
                }
            }
            "model.image_head" => {
                self.variant.image_head_mode = match value {
                    "cls_token" => ImageHeadMode::ClsToken,
                    "tile_fc" => ImageHeadMode::TileFc,
                    "any_tile" => ImageHeadMode::AnyTile,
                    other => {
                        return Err(HarnessError::Config(format!(
                            "model.image_head: {other:?} (cls_token, tile_fc, any_tile)"
                        )))
                    }
                }
            }
            "model.positional" => self.variant.positional_embedding = parse_bool(key, value)?,
            "model.pretrained" => self.variant.pretrained_backbone = parse_bool(key, value)?,
            "model.pretrained_weights" => self.pretrained_weights = Some(PathBuf::from(value)),
            "model.dropout" => self.variant.dropout = parse(key, value)?,
            "train.learning_rate" => self.train.learning_rate = parse(key, value)?,
            "train.weight_decay" => self.train.weight_decay = parse(key, value)?,
            "train.dropout" => self.train.dropout = parse(key, value)?,
            "train.micro_batch" => self.train.micro_batch = parse(key, value)?,
            "train.effective_batch" => self.train.effective_batch = parse(key, value)?,
            "train.epochs" => self.train.epochs = parse(key, value)?,
            "train.seed" => self.train.seed = parse(key, value)?,
            "train.tile_positive_weight" => self.train.tile_positive_weight = parse(key, value)?,
            "train.image_positive_weight" => self.train.image_positive_weight = parse(key, value)?,
            "train.early_stop_train_acc" => {
                self.train.early_stop_train_acc = Some(parse(key, value)?)
            }
            "train.early_stop_val_err" => self.train.early_stop_val_err = Some(parse(key, value)?),
            "train.grad_clip" => self.train.grad_clip = Some(parse(key, value)?),
            "eval.split" => self.eval.split = value.to_string(),
            "eval.latency_warmup" => self.eval.latency_warmup = parse(key, value)?,
            "eval.latency_trials" => self.eval.latency_trials = parse(key, value)?,
            "synth.fires" => self.synth.num_fires = parse(key, value)?,
            "synth.frames" => self.synth.frames_per_fire = parse(key, value)?,
            "synth.height" => self.synth.height = parse(key, value)?,
            "synth.width" => self.synth.width = parse(key, value)?,
            "synth.plume" => self.synth.plume = parse_bool(key, value)?,
            "synth.horizon" => self.synth.horizon_row = parse(key, value)?,
            "synth.seed" => self.synth.seed = parse(key, value)?,
            other => {
                return Err(HarnessError::Config(format!("unknown config key {other:?}")));
            }
        }
        Ok(())
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            geometry: self.data.geometry,
            tile_threshold: self.data.tile_threshold,
            augment: if self.data.augment {
                smokeynet_core::preprocess::AugmentationPolicy::default()
            } else {
                smokeynet_core::preprocess::AugmentationPolicy::identity()
            },
            background: self.variant.extra_channel == ExtraChannel::Background,
        }
    }
}
