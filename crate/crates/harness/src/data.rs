//! Dataset preparation: split resolution, temporal frame pairing, and the
//! per-example load path (decode, resize/crop, rasterize, augment, label,
//! normalize, tile).

use std::collections::HashMap;
use std::path::PathBuf;
use std::rc::Rc;

use ndarray::{ArrayD, IxDyn};
use smokeynet_core::figlib::{
    resolve_supervision, AnnotationSet, ArchiveIndex, SplitManifest, SupervisionSource,
};
use smokeynet_core::preprocess::{
    augment_group, background_channel, normalize, rasterize_regions, resize_and_crop, tile_image,
    tile_labels, AugmentationPolicy, FrameDiff, GeometryConfig, ImageBuffer, Mask, TileGrid,
    TileLabelVector, TILE_PIXEL_THRESHOLD,
};

use crate::HarnessError;

/// The deterministic pipeline settings one run uses.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub geometry: GeometryConfig,
    pub tile_threshold: u32,
    pub augment: AugmentationPolicy,
    /// Build the motion-channel groups for background-fusion variants.
    pub background: bool,
}

impl PipelineConfig {
    pub fn full() -> Self {
        PipelineConfig {
            geometry: GeometryConfig::full(),
            tile_threshold: TILE_PIXEL_THRESHOLD,
            augment: AugmentationPolicy::default(),
            background: false,
        }
    }

    /// Desk-scale preset matching the synthetic corpus: identity geometry
    /// at 72x128 with the proportionally scaled 5x9 grid of 16-pixel tiles
    /// and a threshold scaled to the tile area (10 of the listed sweep).
    pub fn desk() -> Self {
        PipelineConfig {
            geometry: GeometryConfig::desk(),
            tile_threshold: 10,
            augment: AugmentationPolicy::default(),
            background: false,
        }
    }

    pub fn grid(&self) -> Result<TileGrid, HarnessError> {
        Ok(self.geometry.grid()?)
    }

    /// Evaluation batch size: amortize per-op overhead at small tile sizes,
    /// stay memory-safe at full scale.
    pub fn eval_batch(&self, micro_batch: usize) -> usize {
        if self.geometry.tile_size <= 64 {
            micro_batch.max(8)
        } else {
            micro_batch.max(1)
        }
    }
}

/// One trainable/evaluable example: the current frame plus its temporal
/// context paths, with labels and supervision resolved.
#[derive(Debug, Clone)]
pub struct PreparedExample {
    pub fire_id: String,
    pub frame_id: String,
    pub offset_seconds: i32,
    pub image_label: bool,
    pub supervision: SupervisionSource,
    pub annotation: Option<AnnotationSet>,
    /// Oldest first; the last entry is the current frame. The earliest
    /// frame of a sequence pairs with duplicates of itself.
    pub frame_paths: Vec<PathBuf>,
}

#[derive(Debug, Default)]
pub struct PreparedSplits {
    pub train: Vec<PreparedExample>,
    pub val: Vec<PreparedExample>,
    pub test: Vec<PreparedExample>,
}

/// Resolve manifest splits against the index and pair every frame with its
/// nearest earlier frames.
pub fn prepare_splits(
    index: &ArchiveIndex,
    manifest: &SplitManifest,
    num_frames: usize,
) -> PreparedSplits {
    let mut out = PreparedSplits::default();
    for seq in &index.fires {
        let bucket = match manifest.split_of(&seq.fire_id) {
            Some(smokeynet_core::figlib::Split::Train) => &mut out.train,
            Some(smokeynet_core::figlib::Split::Val) => &mut out.val,
            Some(smokeynet_core::figlib::Split::Test) => &mut out.test,
            _ => continue,
        };
        for (i, frame) in seq.frames.iter().enumerate() {
            let mut frame_paths = Vec::with_capacity(num_frames);
            for back in (0..num_frames).rev() {
                let j = i.saturating_sub(back);
                frame_paths.push(seq.frames[j].image_path.clone());
            }
            bucket.push(PreparedExample {
                fire_id: seq.fire_id.clone(),
                frame_id: frame.frame_id.clone(),
                offset_seconds: frame.offset_seconds,
                image_label: frame.image_label,
                supervision: resolve_supervision(frame),
                annotation: frame.annotation.clone(),
                frame_paths,
            });
        }
    }
    out
}

type ProcessedFrame = Rc<(ImageBuffer<f32>, smokeynet_core::preprocess::GeometryMap)>;

/// Decoded-and-processed frames, cached across epochs.
#[derive(Default)]
pub struct FrameCache {
    frames: HashMap<PathBuf, ProcessedFrame>,
}

impl FrameCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn processed(
        &mut self,
        path: &PathBuf,
        geometry: &GeometryConfig,
    ) -> Result<ProcessedFrame, HarnessError> {
        if let Some(hit) = self.frames.get(path) {
            return Ok(Rc::clone(hit));
        }
        let raw = ImageBuffer::<f32>::load(path)?;
        let (img, map, _warn) = resize_and_crop(&raw, geometry)?;
        let entry = Rc::new((img, map));
        self.frames.insert(path.clone(), Rc::clone(&entry));
        Ok(entry)
    }
}

/// A fully materialized example, ready to stack into a batch.
pub struct LoadedExample {
    /// (frames, tiles, channels, tile, tile), normalized.
    pub input: ArrayD<f32>,
    /// (frames, tiles, 1, tile, tile), in [0, 1]; present when the pipeline
    /// builds the motion channel.
    pub background: Option<ArrayD<f32>>,
    pub tile_labels: Option<TileLabelVector>,
    pub image_label: bool,
    pub supervision: SupervisionSource,
}

fn tiles_to_array(
    tiles: &[ImageBuffer<f32>],
    frame_idx: usize,
    out: &mut ArrayD<f32>,
) {
    for (t, tile) in tiles.iter().enumerate() {
        out.slice_mut(ndarray::s![frame_idx, t, .., .., ..])
            .assign(&tile.data);
    }
}

/// Run the full deterministic pipeline for one example.
///
/// `augment_seed` enables the stochastic stage (training only); evaluation
/// passes `None`. Tile labels are always derived after augmentation from
/// the transformed mask.
pub fn load_example(
    example: &PreparedExample,
    pipe: &PipelineConfig,
    grid: &TileGrid,
    cache: &mut FrameCache,
    augment_seed: Option<u64>,
) -> Result<LoadedExample, HarnessError> {
    let mut frames: Vec<ImageBuffer<f32>> = Vec::with_capacity(example.frame_paths.len());
    let mut map = None;
    for path in &example.frame_paths {
        let processed = cache.processed(path, &pipe.geometry)?;
        frames.push(processed.0.clone());
        map = Some(processed.1);
    }
    let map = map.expect("at least one frame");

    // supervision mask in post-crop space, built from the current frame's
    // annotation through the same geometry map
    let (mask, _warnings): (Mask, Vec<String>) = match (&example.annotation, example.supervision) {
        (Some(ann), kind @ (SupervisionSource::Contour | SupervisionSource::BoxFill)) => {
            let mapped = AnnotationSet {
                contours: ann.contours.iter().map(|p| map.apply_polygon(p)).collect(),
                boxes: ann
                    .boxes
                    .iter()
                    .map(|b| {
                        let (x0, y0) = map.apply(b.xmin, b.ymin);
                        let (x1, y1) = map.apply(b.xmax, b.ymax);
                        smokeynet_core::figlib::BoundingBox {
                            xmin: x0,
                            ymin: y0,
                            xmax: x1,
                            ymax: y1,
                        }
                    })
                    .collect(),
            };
            rasterize_regions(&mapped, kind, grid.height, grid.width)
        }
        _ => (Mask::zeros((grid.height, grid.width)), Vec::new()),
    };

    let (frames, mask) = match augment_seed {
        Some(seed) => augment_group(&frames, &mask, &pipe.augment, seed),
        None => (frames, mask),
    };

    let tile_labels = if example.supervision == SupervisionSource::Excluded {
        None
    } else {
        Some(tile_labels(&mask, grid, pipe.tile_threshold)?)
    };

    let f = frames.len();
    let tiles = grid.tile_count();
    let s = grid.tile_size;
    let mut input = ArrayD::<f32>::zeros(IxDyn(&[f, tiles, 3, s, s]));
    for (fi, frame) in frames.iter().enumerate() {
        let normalized = normalize(frame);
        let tiled = tile_image(&normalized, grid)?;
        tiles_to_array(&tiled, fi, &mut input);
    }

    let background = if pipe.background {
        let mut bg = ArrayD::<f32>::zeros(IxDyn(&[f, tiles, 1, s, s]));
        let mut sub = FrameDiff::<f32>::default();
        for fi in 0..f {
            let fg = if fi == 0 {
                background_channel(&frames[0], &frames[0], &mut sub)?
            } else {
                background_channel(&frames[fi - 1], &frames[fi], &mut sub)?
            };
            let fg_img = ImageBuffer::new(fg.insert_axis(ndarray::Axis(0)));
            let tiled = tile_image(&fg_img, grid)?;
            for (t, tile) in tiled.iter().enumerate() {
                bg.slice_mut(ndarray::s![fi, t, .., .., ..]).assign(&tile.data);
            }
        }
        Some(bg)
    } else {
        None
    };

    Ok(LoadedExample {
        input,
        background,
        tile_labels,
        image_label: example.image_label,
        supervision: example.supervision,
    })
}

/// Manifest loader for diagnostics and tests (panics on errors).
pub fn parse_manifest_for_tests(path: &str) -> smokeynet_core::figlib::SplitManifest {
    smokeynet_core::figlib::parse_split_manifest(
        &std::fs::read_to_string(path).expect("manifest readable"),
    )
    .expect("manifest parses")
}

/// Stack loaded examples into the model's batch arrays.
pub fn stack_batch(examples: &[LoadedExample]) -> (ArrayD<f32>, Option<ArrayD<f32>>) {
    assert!(!examples.is_empty());
    let mut shape = vec![examples.len()];
    shape.extend_from_slice(examples[0].input.shape());
    let mut frames = ArrayD::<f32>::zeros(IxDyn(&shape));
    for (i, ex) in examples.iter().enumerate() {
        frames.index_axis_mut(ndarray::Axis(0), i).assign(&ex.input);
    }
    let background = examples[0].background.as_ref().map(|bg0| {
        let mut shape = vec![examples.len()];
        shape.extend_from_slice(bg0.shape());
        let mut bg = ArrayD::<f32>::zeros(IxDyn(&shape));
        for (i, ex) in examples.iter().enumerate() {
            bg.index_axis_mut(ndarray::Axis(0), i)
                .assign(ex.background.as_ref().expect("uniform background"));
        }
        bg
    });
    (frames, background)
}
