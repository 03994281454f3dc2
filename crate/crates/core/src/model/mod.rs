//! The SmokeyNet architecture family: a per-tile CNN backbone applied to
//! each frame independently, a temporal aggregator merging each tile across
//! frames, a spatial transformer attending across tiles, and tile/image
//! heads for intermediate supervision and the final decision.

pub mod backbones;
pub mod config;
mod heads;
mod spatial;
mod temporal;

pub use config::{
    BackboneKind, ConfigError, ExtraChannel, ImageHeadMode, SpatialKind, TemporalKind,
    VariantConfig,
};
pub use heads::Head;
pub use spatial::TileVit;
pub use temporal::{ResNet3d, TemporalNet};

use backbones::BackboneNet;
use ndarray::ArrayD;
use smokeynet_autograd::nn::{init::seed_stream, join, Ctx, Linear, Module};
use smokeynet_autograd::{ops, Scalar, Tensor};
use thiserror::Error;

use crate::preprocess::TileGrid;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("shape error: expected {expected}, got {got}")]
    Shape { expected: String, got: String },
    #[error("state error: {0}")]
    State(String),
}

/// Input geometry the model is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelGeometry {
    pub rows: usize,
    pub cols: usize,
    pub tile_size: usize,
    pub in_channels: usize,
}

impl ModelGeometry {
    pub fn from_grid(grid: &TileGrid, in_channels: usize) -> Self {
        ModelGeometry {
            rows: grid.rows,
            cols: grid.cols,
            tile_size: grid.tile_size,
            in_channels,
        }
    }

    /// Full-scale default: the 5x9 grid of 224-pixel RGB tiles.
    pub fn canonical() -> Self {
        ModelGeometry {
            rows: 5,
            cols: 9,
            tile_size: 224,
            in_channels: 3,
        }
    }

    pub fn tiles(&self) -> usize {
        self.rows * self.cols
    }
}

/// One batch of model input: tiled normalized frame groups, plus the
/// matching background-channel groups when the variant uses them.
pub struct InputBatch<T: Scalar> {
    /// (B, frames, tiles, channels, tile, tile)
    pub frames: Tensor<T>,
    /// (B, frames, tiles, 1, tile, tile)
    pub background: Option<Tensor<T>>,
}

impl<T: Scalar> InputBatch<T> {
    pub fn new(frames: ArrayD<T>) -> Self {
        InputBatch {
            frames: Tensor::constant(frames),
            background: None,
        }
    }

    pub fn with_background(frames: ArrayD<T>, background: ArrayD<T>) -> Self {
        InputBatch {
            frames: Tensor::constant(frames),
            background: Some(Tensor::constant(background)),
        }
    }

    pub fn batch_size(&self) -> usize {
        self.frames.shape()[0]
    }
}

/// Per-stage tile logits plus the single image logit.
pub struct ModelOutputs<T: Scalar> {
    pub tile_logits_cnn: Tensor<T>,
    pub tile_logits_temporal: Option<Tensor<T>>,
    pub tile_logits_spatial: Option<Tensor<T>>,
    pub image_logit: Tensor<T>,
}

impl<T: Scalar> ModelOutputs<T> {
    /// Present tile-logit stages in architecture order.
    pub fn stages(&self) -> Vec<(&'static str, &Tensor<T>)> {
        let mut out = vec![("cnn", &self.tile_logits_cnn)];
        if let Some(t) = &self.tile_logits_temporal {
            out.push(("temporal", t));
        }
        if let Some(s) = &self.tile_logits_spatial {
            out.push(("spatial", s));
        }
        out
    }

    pub fn stage_count(&self) -> usize {
        self.stages().len()
    }

    /// Tile logits of the last architecture stage.
    pub fn last_stage_tile_logits(&self) -> &Tensor<T> {
        self.tile_logits_spatial
            .as_ref()
            .or(self.tile_logits_temporal.as_ref())
            .unwrap_or(&self.tile_logits_cnn)
    }

    /// Image probabilities under the logistic link.
    pub fn image_probabilities(&self) -> Vec<T> {
        ops::sigmoid(&self.image_logit)
            .data()
            .iter()
            .copied()
            .collect()
    }

    /// Thresholded image predictions: positive iff logit > 0, which is
    /// exactly probability > 0.5.
    pub fn image_predictions(&self) -> Vec<bool> {
        self.image_logit
            .data()
            .iter()
            .map(|&z| z > T::zero())
            .collect()
    }
}

/// The learned or rule-based map from tile logits / summary embedding to
/// the image logit.
pub enum ImageHead<T: Scalar> {
    /// Head over the spatial aggregator's summary token.
    Cls(Head<T>),
    /// Single affine layer over the tile probabilities.
    TileFc(Linear<T>),
    /// Image logit = max tile logit, so the image is positive exactly when
    /// some tile probability exceeds 0.5.
    AnyTile,
}

/// Learned tile-vote rule: sigmoid the tile logits and mix them through one
/// affine layer into an image logit.
pub fn tile_fc_decision<T: Scalar>(tile_logits: &Tensor<T>, fc: &Linear<T>) -> Tensor<T> {
    let probs = ops::sigmoid(tile_logits);
    let out = fc.forward(&probs); // (B, 1)
    let b = out.shape()[0];
    ops::reshape(&out, &[b])
}

/// Non-learned any-tile rule, expressed as a logit so threshold duality
/// holds: max logit > 0 iff any tile probability > 0.5.
pub fn any_tile_decision<T: Scalar>(tile_logits: &Tensor<T>) -> Tensor<T> {
    ops::max_axis(tile_logits, 1)
}

/// Concatenate the raw and background streams (each (B, tiles, E)) and halve
/// back to width E through one affine layer.
pub fn fuse_streams<T: Scalar>(
    raw: &Tensor<T>,
    bg: &Tensor<T>,
    fusion: &Linear<T>,
) -> Result<Tensor<T>, ModelError> {
    let (rs, bs) = (raw.shape(), bg.shape());
    if rs != bs {
        return Err(ModelError::Shape {
            expected: format!("{rs:?}"),
            got: format!("{bs:?}"),
        });
    }
    let width = *rs.last().expect("embedding rank");
    if fusion.in_dim() != 2 * width || fusion.out_dim() != width {
        return Err(ModelError::Shape {
            expected: format!("fusion {}->{}", 2 * width, width),
            got: format!("fusion {}->{}", fusion.in_dim(), fusion.out_dim()),
        });
    }
    let cat = ops::concat(&[raw.clone(), bg.clone()], rs.len() - 1);
    Ok(fusion.forward(&cat))
}

pub struct SmokeyNet<T: Scalar> {
    pub config: VariantConfig,
    pub geometry: ModelGeometry,
    backbone: BackboneNet<T>,
    bg_backbone: Option<BackboneNet<T>>,
    temporal: Option<TemporalNet<T>>,
    bg_temporal: Option<TemporalNet<T>>,
    fusion: Option<Linear<T>>,
    spatial: Option<TileVit<T>>,
    head_cnn: Head<T>,
    head_temporal: Option<Head<T>>,
    head_spatial: Option<Head<T>>,
    image_head: ImageHead<T>,
    /// Backbone micro-batch during evaluation passes (memory control).
    pub eval_chunk: usize,
}

impl<T: Scalar> SmokeyNet<T> {
    /// Build a trainable model for one variant. Weights are randomly
    /// initialized from named streams of `seed`; pretrained backbone weights,
    /// when configured, are loaded afterwards via [`SmokeyNet::load_state`].
    pub fn build(
        config: VariantConfig,
        geometry: ModelGeometry,
        seed: u64,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = seed_stream(seed, "backbone");
        let backbone = BackboneNet::build(
            config.backbone,
            geometry.in_channels,
            geometry.tile_size,
            &mut rng,
        );
        let emb = backbone.emb_width();
        if config.temporal == TemporalKind::Cnn3d && matches!(backbone, BackboneNet::Deit(_)) {
            return Err(ModelError::Config(ConfigError::Invalid(
                "the 3-d temporal aggregator needs a convolutional feature map".into(),
            )));
        }

        let mk_temporal = |label: &str| -> Option<TemporalNet<T>> {
            let mut rng = seed_stream(seed, label);
            match config.temporal {
                TemporalKind::None => None,
                TemporalKind::Lstm => Some(TemporalNet::lstm(emb, &mut rng)),
                TemporalKind::Transformer => Some(TemporalNet::transformer(
                    emb,
                    config.num_frames,
                    &mut rng,
                )),
                TemporalKind::Cnn3d => {
                    let map_channels = match &backbone {
                        BackboneNet::ResNet(n) => n.map_channels(),
                        BackboneNet::MobileNet(_) | BackboneNet::Fpn(_) => {
                            backbones::MOBILENET_EMB
                        }
                        BackboneNet::EfficientNet(_) => backbones::EFFICIENTNET_EMB,
                        BackboneNet::Deit(n) => n.map_channels(),
                    };
                    Some(TemporalNet::cnn3d(map_channels, &mut rng))
                }
            }
        };
        let temporal = mk_temporal("temporal");
        let agg_width = temporal.as_ref().map_or(emb, |t| t.out_width(emb));

        let (bg_backbone, bg_temporal, fusion) = if config.extra_channel == ExtraChannel::Background
        {
            let mut rng = seed_stream(seed, "bg-backbone");
            let bg = BackboneNet::build(config.backbone, 1, geometry.tile_size, &mut rng);
            let bg_t = mk_temporal("bg-temporal");
            let mut rng = seed_stream(seed, "fusion");
            let fusion = Linear::new(2 * agg_width, agg_width, true, &mut rng);
            (Some(bg), bg_t, Some(fusion))
        } else {
            (None, None, None)
        };

        let spatial = match config.spatial {
            SpatialKind::None => None,
            SpatialKind::Vit => {
                let mut rng = seed_stream(seed, "spatial");
                Some(TileVit::new(
                    agg_width,
                    geometry.tiles(),
                    config.positional_embedding,
                    config.dropout,
                    &mut rng,
                ))
            }
        };

        let mut rng = seed_stream(seed, "heads");
        let head_cnn = Head::new(emb, config.dropout, &mut rng);
        let head_temporal = temporal
            .as_ref()
            .map(|_| Head::new(agg_width, config.dropout, &mut rng));
        let head_spatial = spatial
            .as_ref()
            .map(|v| Head::new(v.width, config.dropout, &mut rng));
        let image_head = match config.image_head_mode {
            ImageHeadMode::ClsToken => ImageHead::Cls(Head::new(
                spatial.as_ref().expect("validated").width,
                config.dropout,
                &mut rng,
            )),
            ImageHeadMode::TileFc => {
                ImageHead::TileFc(Linear::new(geometry.tiles(), 1, true, &mut rng))
            }
            ImageHeadMode::AnyTile => ImageHead::AnyTile,
        };

        // evaluation memory only needs chunking at large tile sizes; small
        // tiles run the whole batch through one set of GEMMs
        let eval_chunk = if geometry.tile_size <= 64 {
            usize::MAX
        } else {
            16
        };
        Ok(SmokeyNet {
            config,
            geometry,
            backbone,
            bg_backbone,
            temporal,
            bg_temporal,
            fusion,
            spatial,
            head_cnn,
            head_temporal,
            head_spatial,
            image_head,
            eval_chunk,
        })
    }

    fn check_input(&self, batch: &InputBatch<T>) -> Result<(), ModelError> {
        let g = &self.geometry;
        let expected = vec![
            self.config.num_frames,
            g.tiles(),
            g.in_channels,
            g.tile_size,
            g.tile_size,
        ];
        let got = batch.frames.shape();
        if got.len() != 6 || got[1..] != expected[..] {
            return Err(ModelError::Shape {
                expected: format!("(B, {expected:?})"),
                got: format!("{got:?}"),
            });
        }
        match (&self.bg_backbone, &batch.background) {
            (Some(_), Some(bg)) => {
                let want = vec![
                    got[0],
                    self.config.num_frames,
                    g.tiles(),
                    1,
                    g.tile_size,
                    g.tile_size,
                ];
                if bg.shape() != want {
                    return Err(ModelError::Shape {
                        expected: format!("{want:?}"),
                        got: format!("{:?}", bg.shape()),
                    });
                }
            }
            (Some(_), None) => {
                return Err(ModelError::Shape {
                    expected: "background channel group".into(),
                    got: "no background input".into(),
                });
            }
            (None, _) => {}
        }
        Ok(())
    }

    fn backbone_pass(
        &self,
        net: &BackboneNet<T>,
        flat: &Tensor<T>,
        ctx: &mut Ctx,
    ) -> (Tensor<T>, Tensor<T>) {
        let n = flat.shape()[0];
        if ctx.train || n <= self.eval_chunk {
            return net.forward(flat, ctx);
        }
        let mut embs = Vec::new();
        let mut maps = Vec::new();
        let mut start = 0;
        while start < n {
            let len = self.eval_chunk.min(n - start);
            let piece = ops::slice_axis(flat, 0, start, len);
            let (e, m) = net.forward(&piece, ctx);
            embs.push(e);
            maps.push(m);
            start += len;
        }
        (ops::concat(&embs, 0), ops::concat(&maps, 0))
    }

    /// Run one stream (raw or background) through backbone + temporal
    /// aggregation, producing (B, tiles, agg_width) plus the last-frame
    /// backbone embeddings (B, tiles, E).
    fn stream_forward(
        &self,
        net: &BackboneNet<T>,
        temporal: Option<&TemporalNet<T>>,
        input: &Tensor<T>,
        ctx: &mut Ctx,
    ) -> (Tensor<T>, Tensor<T>) {
        let shape = input.shape();
        let (b, frames, tiles, c, s) = (shape[0], shape[1], shape[2], shape[3], shape[4]);
        let flat = ops::reshape(input, &[b * frames * tiles, c, s, s]);
        let (embs, maps) = self.backbone_pass(net, &flat, ctx);
        let e = embs.shape()[1];
        let embs = ops::reshape(&embs, &[b, frames, tiles, e]);
        let last_frame = ops::index_axis(&embs, 1, frames - 1); // (B, tiles, E)

        let agg = match temporal {
            None => last_frame.clone(),
            Some(TemporalNet::Cnn3d(r3d)) => {
                let mshape = maps.shape();
                let (cm, h, w) = (mshape[1], mshape[2], mshape[3]);
                let maps = ops::reshape(&maps, &[b, frames, tiles, cm, h, w]);
                let maps = ops::permute(&maps, &[0, 2, 3, 1, 4, 5]); // (B,tiles,Cm,F,h,w)
                let clips = ops::reshape(&maps, &[b * tiles, cm, frames, h, w]);
                let agg = r3d.forward(&clips, ctx);
                ops::reshape(&agg, &[b, tiles, r3d.out_width()])
            }
            Some(t) => {
                let seq = ops::permute(&embs, &[0, 2, 1, 3]); // (B,tiles,F,E)
                let seq = ops::reshape(&seq, &[b * tiles, frames, e]);
                let agg = t.forward_seq(&seq, ctx);
                ops::reshape(&agg, &[b, tiles, t.out_width(e)])
            }
        };
        (agg, last_frame)
    }

    /// Forward pass. In evaluation mode, outputs are deterministic for
    /// fixed weights and inputs.
    pub fn forward(
        &self,
        batch: &InputBatch<T>,
        ctx: &mut Ctx,
    ) -> Result<ModelOutputs<T>, ModelError> {
        self.check_input(batch)?;
        let (agg_raw, cnn_emb) =
            self.stream_forward(&self.backbone, self.temporal.as_ref(), &batch.frames, ctx);

        let tile_logits_cnn = self.head_cnn.forward(&cnn_emb, ctx);

        let agg = match (&self.bg_backbone, &self.fusion) {
            (Some(bg_net), Some(fusion)) => {
                let bg_input = batch.background.as_ref().expect("checked");
                let (agg_bg, _) =
                    self.stream_forward(bg_net, self.bg_temporal.as_ref(), bg_input, ctx);
                fuse_streams(&agg_raw, &agg_bg, fusion)?
            }
            _ => agg_raw,
        };

        let tile_logits_temporal = self
            .head_temporal
            .as_ref()
            .map(|h| h.forward(&agg, ctx));

        let (tile_logits_spatial, cls_emb) = match &self.spatial {
            Some(vit) => {
                let (cls, tiles_out) = vit.forward(&agg, ctx);
                let logits = self
                    .head_spatial
                    .as_ref()
                    .map(|h| h.forward(&tiles_out, ctx));
                (logits, Some(cls))
            }
            None => (None, None),
        };

        let image_logit = match &self.image_head {
            ImageHead::Cls(head) => head.forward(cls_emb.as_ref().expect("validated"), ctx),
            ImageHead::TileFc(fc) => {
                let last = tile_logits_temporal
                    .as_ref()
                    .unwrap_or(&tile_logits_cnn);
                tile_fc_decision(last, fc)
            }
            ImageHead::AnyTile => {
                let last = tile_logits_temporal
                    .as_ref()
                    .unwrap_or(&tile_logits_cnn);
                any_tile_decision(last)
            }
        };

        Ok(ModelOutputs {
            tile_logits_cnn,
            tile_logits_temporal,
            tile_logits_spatial,
            image_logit,
        })
    }

    /// Exact count of trainable scalars.
    pub fn count_parameters(&self) -> usize {
        smokeynet_autograd::nn::param_count(self)
    }

    /// Parameter count in millions, to one decimal (report convention).
    pub fn params_millions(&self) -> f64 {
        (self.count_parameters() as f64 / 1e6 * 10.0).round() / 10.0
    }

    pub fn parameters(&self) -> Vec<Tensor<T>> {
        smokeynet_autograd::nn::named_params(self)
            .into_iter()
            .map(|(_, t)| t)
            .collect()
    }

    /// Full state: trainable parameters prefixed `param.` and buffers
    /// (batch-norm running statistics) prefixed `buffer.`.
    pub fn state(&self) -> Vec<(String, ArrayD<T>)> {
        let mut out = Vec::new();
        self.visit_params("", &mut |name, t| {
            out.push((format!("param.{name}"), t.data().clone()));
        });
        self.visit_buffers("", &mut |name, b| {
            out.push((format!("buffer.{name}"), b.borrow().clone()));
        });
        out
    }

    /// Load a state produced by [`SmokeyNet::state`] from an identically
    /// configured build. Unknown names, missing names, and shape mismatches
    /// are errors.
    pub fn load_state(&self, entries: &[(String, ArrayD<T>)]) -> Result<(), ModelError> {
        use std::collections::BTreeMap;
        let mut incoming: BTreeMap<&str, &ArrayD<T>> =
            entries.iter().map(|(n, a)| (n.as_str(), a)).collect();
        let mut errors: Vec<String> = Vec::new();
        self.visit_params("", &mut |name, t| {
            let key = format!("param.{name}");
            match incoming.remove(key.as_str()) {
                Some(arr) if arr.shape() == t.data().shape() => t.set_data(arr.clone()),
                Some(arr) => errors.push(format!(
                    "{key}: shape {:?} != expected {:?}",
                    arr.shape(),
                    t.data().shape()
                )),
                None => errors.push(format!("{key}: missing from checkpoint")),
            }
        });
        self.visit_buffers("", &mut |name, b| {
            let key = format!("buffer.{name}");
            match incoming.remove(key.as_str()) {
                Some(arr) if arr.shape() == b.borrow().shape() => *b.borrow_mut() = arr.clone(),
                Some(arr) => errors.push(format!(
                    "{key}: shape {:?} != expected {:?}",
                    arr.shape(),
                    b.borrow().shape()
                )),
                None => errors.push(format!("{key}: missing from checkpoint")),
            }
        });
        for (name, _) in incoming {
            errors.push(format!("{name}: not part of this variant"));
        }
        if errors.is_empty() {
            Ok(())
        } else {
            errors.truncate(8);
            Err(ModelError::State(errors.join("; ")))
        }
    }
}

impl<T: Scalar> Module<T> for SmokeyNet<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        self.backbone.visit_params(&join(prefix, "backbone"), f);
        if let Some(bg) = &self.bg_backbone {
            bg.visit_params(&join(prefix, "bg_backbone"), f);
        }
        if let Some(t) = &self.temporal {
            t.visit_params(&join(prefix, "temporal"), f);
        }
        if let Some(t) = &self.bg_temporal {
            t.visit_params(&join(prefix, "bg_temporal"), f);
        }
        if let Some(fu) = &self.fusion {
            fu.visit_params(&join(prefix, "fusion"), f);
        }
        if let Some(s) = &self.spatial {
            s.visit_params(&join(prefix, "spatial"), f);
        }
        self.head_cnn.visit_params(&join(prefix, "head_cnn"), f);
        if let Some(h) = &self.head_temporal {
            h.visit_params(&join(prefix, "head_temporal"), f);
        }
        if let Some(h) = &self.head_spatial {
            h.visit_params(&join(prefix, "head_spatial"), f);
        }
        match &self.image_head {
            ImageHead::Cls(h) => h.visit_params(&join(prefix, "image_head"), f),
            ImageHead::TileFc(fc) => fc.visit_params(&join(prefix, "image_head_fc"), f),
            ImageHead::AnyTile => {}
        }
    }

    fn visit_buffers(
        &self,
        prefix: &str,
        f: &mut dyn FnMut(&str, &std::cell::RefCell<ArrayD<T>>),
    ) {
        self.backbone.visit_buffers(&join(prefix, "backbone"), f);
        if let Some(bg) = &self.bg_backbone {
            bg.visit_buffers(&join(prefix, "bg_backbone"), f);
        }
        if let Some(t) = &self.temporal {
            t.visit_buffers(&join(prefix, "temporal"), f);
        }
        if let Some(t) = &self.bg_temporal {
            t.visit_buffers(&join(prefix, "bg_temporal"), f);
        }
    }
}

/// Build-time helper for tests and the harness: the (B, F, tiles, C, s, s)
/// input array filled from a closure.
pub fn input_array<T: Scalar>(
    b: usize,
    frames: usize,
    geometry: &ModelGeometry,
    channels: usize,
    mut fill: impl FnMut() -> T,
) -> ArrayD<T> {
    ArrayD::from_shape_fn(
        ndarray::IxDyn(&[
            b,
            frames,
            geometry.tiles(),
            channels,
            geometry.tile_size,
            geometry.tile_size,
        ]),
        |_| fill(),
    )
}
