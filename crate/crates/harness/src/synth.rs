//! Desk-scale synthetic corpus: fires rendered as a growing translucent
//! plume over textured terrain, with cloud-like distractors above a horizon
//! row, written in the archive layout with exact contour annotations and a
//! split manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use smokeynet_autograd::nn::init::seed_stream;
use smokeynet_core::figlib::{
    canonical_frame_stem, label_from_offset, write_sidecar, AnnotationSet, Polygon, SplitManifest,
    FRAME_SPACING_SECONDS,
};
use smokeynet_core::preprocess::{Mask, TileGrid};

use crate::HarnessError;

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub num_fires: usize,
    pub frames_per_fire: usize,
    pub height: usize,
    pub width: usize,
    /// Disabling the plume emits only the negative (pre-ignition) frames.
    pub plume: bool,
    /// Distractor blobs stay above this row; plumes spawn below it.
    pub horizon_row: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_fires: 4,
            frames_per_fire: 81,
            height: 1040,
            width: 1856,
            plume: true,
            horizon_row: 350,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    /// Reduced preset used by the desk-scale tests: 72x128 frames (the
    /// proportionally scaled 5x9 grid of 16-pixel tiles).
    pub fn desk(num_fires: usize, frames_per_fire: usize, seed: u64) -> Self {
        SyntheticSpec {
            num_fires,
            frames_per_fire,
            height: 72,
            width: 128,
            plume: true,
            horizon_row: 20,
            seed,
        }
    }

    /// Offsets for one fire: 60 s spacing, negatives first, ignition at 0.
    pub fn offsets(&self) -> Vec<i32> {
        let negatives = self.frames_per_fire / 2;
        (0..self.frames_per_fire)
            .map(|i| (i as i32 - negatives as i32) * FRAME_SPACING_SECONDS)
            .collect()
    }
}

/// Ground truth for one generated frame.
#[derive(Debug, Clone)]
pub struct FrameTruth {
    pub offset_seconds: i32,
    pub image_label: bool,
    pub mask_pixels: usize,
    /// Tile labels under the given grid/threshold, computed by the
    /// generator's own window counting (independent of the pipeline path).
    pub tile_labels: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct FireTruth {
    pub fire_id: String,
    pub frames: Vec<FrameTruth>,
}

#[derive(Debug, Clone)]
pub struct CorpusTruth {
    pub fires: Vec<FireTruth>,
    pub manifest_path: PathBuf,
    pub manifest: SplitManifest,
}

struct FireLayout {
    plume_cx: f64,
    plume_cy: f64,
    wobble: Vec<f64>,
    clouds: Vec<(f64, f64, f64, f64)>, // (cx, cy, rx, ry)
    terrain_phase: f64,
}

fn fire_layout(spec: &SyntheticSpec, rng: &mut ChaCha20Rng) -> FireLayout {
    let h = spec.height as f64;
    let w = spec.width as f64;
    let hor = spec.horizon_row as f64;
    let plume_cx = w * (0.25 + 0.5 * rng.random::<f64>());
    let plume_cy = hor + (h - hor) * (0.25 + 0.4 * rng.random::<f64>());
    let wobble: Vec<f64> = (0..16).map(|_| 0.85 + 0.3 * rng.random::<f64>()).collect();
    let clouds = (0..3)
        .map(|_| {
            (
                w * rng.random::<f64>(),
                hor * 0.6 * rng.random::<f64>(),
                w * (0.03 + 0.05 * rng.random::<f64>()),
                hor * (0.1 + 0.15 * rng.random::<f64>()),
            )
        })
        .collect();
    FireLayout {
        plume_cx,
        plume_cy,
        wobble,
        clouds,
        terrain_phase: rng.random::<f64>() * 100.0,
    }
}

/// Plume contour at a given positive offset: a wobbled 16-gon whose radius
/// grows linearly with minutes since ignition.
fn plume_polygon(layout: &FireLayout, spec: &SyntheticSpec, offset_seconds: i32) -> Polygon {
    let minutes = f64::from(offset_seconds) / 60.0;
    let base = (spec.height.min(spec.width) as f64) * 0.10;
    let growth = (spec.height.min(spec.width) as f64) * 0.010;
    let r = base + growth * minutes;
    (0..16)
        .map(|k| {
            let theta = std::f64::consts::TAU * k as f64 / 16.0;
            // star-shaped around the center (positive wobbled radius per
            // vertex), so the contour is a simple polygon; stretched
            // vertically like a rising column
            let rk = r * layout.wobble[k];
            [
                layout.plume_cx + rk * theta.cos(),
                layout.plume_cy - 1.3 * rk * theta.sin(),
            ]
        })
        .collect()
}

/// Generator-side fill: exhaustive point-in-polygon over the bounding box,
/// deliberately separate from the scanline rasterizer it later validates.
fn fill_polygon_exhaustive(poly: &Polygon, height: usize, width: usize) -> Mask {
    let mut mask = Mask::zeros((height, width));
    let min_x = poly.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min);
    let max_x = poly.iter().map(|v| v[0]).fold(f64::NEG_INFINITY, f64::max);
    let min_y = poly.iter().map(|v| v[1]).fold(f64::INFINITY, f64::min);
    let max_y = poly.iter().map(|v| v[1]).fold(f64::NEG_INFINITY, f64::max);
    let y0 = (min_y.floor().max(0.0)) as usize;
    let y1 = (max_y.ceil().min(height as f64 - 1.0)) as usize;
    let x0 = (min_x.floor().max(0.0)) as usize;
    let x1 = (max_x.ceil().min(width as f64 - 1.0)) as usize;
    for y in y0..=y1 {
        for x in x0..=x1 {
            if smokeynet_core::preprocess::raster::oracle::point_inside(
                x as f64 + 0.5,
                y as f64 + 0.5,
                poly,
            ) {
                mask[[y, x]] = 1;
            }
        }
    }
    mask
}

fn terrain_value(x: usize, y: usize, phase: f64) -> f64 {
    let xf = x as f64;
    let yf = y as f64;
    0.5 + 0.08 * ((xf * 0.05 + phase).sin() * (yf * 0.07 + phase * 0.5).cos())
        + 0.04 * ((xf * 0.013 - yf * 0.011 + phase).sin())
}

fn render_frame(
    spec: &SyntheticSpec,
    layout: &FireLayout,
    plume_mask: Option<&Mask>,
) -> image::RgbImage {
    let (h, w) = (spec.height, spec.width);
    let mut img = image::RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let (r, g, b) = if y < spec.horizon_row {
                // sky gradient
                let t = y as f64 / spec.horizon_row as f64;
                (0.45 + 0.1 * t, 0.62 + 0.08 * t, 0.85 - 0.05 * t)
            } else {
                let v = terrain_value(x, y, layout.terrain_phase);
                (0.25 * v + 0.1, 0.35 * v + 0.12, 0.18 * v + 0.08)
            };
            let (mut r, mut g, mut b) = (r, g, b);
            // static cloud distractors above the horizon
            for &(cx, cy, rx, ry) in &layout.clouds {
                let dx = (x as f64 - cx) / rx;
                let dy = (y as f64 - cy) / ry;
                let d = dx * dx + dy * dy;
                if d < 1.0 {
                    let a = 0.7 * (1.0 - d);
                    r = r * (1.0 - a) + 0.95 * a;
                    g = g * (1.0 - a) + 0.95 * a;
                    b = b * (1.0 - a) + 0.97 * a;
                }
            }
            if let Some(mask) = plume_mask {
                if mask[[y, x]] == 1 {
                    let a = 0.9;
                    r = r * (1.0 - a) + 0.92 * a;
                    g = g * (1.0 - a) + 0.90 * a;
                    b = b * (1.0 - a) + 0.88 * a;
                }
            }
            img.put_pixel(
                x as u32,
                y as u32,
                image::Rgb([
                    (r.clamp(0.0, 1.0) * 255.0).round() as u8,
                    (g.clamp(0.0, 1.0) * 255.0).round() as u8,
                    (b.clamp(0.0, 1.0) * 255.0).round() as u8,
                ]),
            );
        }
    }
    img
}

fn tile_labels_by_window_count(
    mask: &Mask,
    grid: &TileGrid,
    threshold: u32,
) -> Vec<bool> {
    grid.tiles
        .iter()
        .map(|t| {
            let mut count = 0u32;
            for y in t.y0..t.y0 + grid.tile_size {
                for x in t.x0..t.x0 + grid.tile_size {
                    count += u32::from(mask[[y, x]]);
                }
            }
            count > threshold
        })
        .collect()
}

/// Round-robin split: half train, then alternating val/test, omitted empty.
fn default_manifest(fire_ids: &[String]) -> SplitManifest {
    let mut manifest = SplitManifest::default();
    let train_count = fire_ids.len().div_ceil(2);
    for (i, id) in fire_ids.iter().enumerate() {
        if i < train_count {
            manifest.train_fires.insert(id.clone());
        } else if (i - train_count) % 2 == 0 {
            manifest.val_fires.insert(id.clone());
        } else {
            manifest.test_fires.insert(id.clone());
        }
    }
    manifest
}

/// Write a synthetic archive under `root` and return its ground truth.
///
/// Frames are PNG files named by the canonical signed-offset stem; positive
/// frames carry their plume polygon in the annotation sidecar; a manifest
/// file `splits.txt` divides the fires. Ground-truth tile labels are
/// computed for `grid`/`threshold` by direct window counting.
pub fn generate_synthetic_corpus(
    spec: &SyntheticSpec,
    root: &Path,
    grid: &TileGrid,
    threshold: u32,
) -> Result<CorpusTruth, HarnessError> {
    assert_eq!(grid.height, spec.height, "grid matches generated frames");
    assert_eq!(grid.width, spec.width, "grid matches generated frames");
    fs::create_dir_all(root).map_err(|source| HarnessError::Io {
        path: root.to_path_buf(),
        source,
    })?;
    let mut fires = Vec::new();
    let mut fire_ids = Vec::new();
    for fire_idx in 0..spec.num_fires {
        let fire_id = format!(
            "202106{:02}_SynthFire{fire_idx:02}_sy{fire_idx:02}-n-mobo-c",
            fire_idx + 1
        );
        let dir = root.join(&fire_id);
        fs::create_dir_all(&dir).map_err(|source| HarnessError::Io {
            path: dir.clone(),
            source,
        })?;
        let mut rng = seed_stream(spec.seed, &format!("synth-fire-{fire_idx}"));
        let layout = fire_layout(spec, &mut rng);
        let mut truth = FireTruth {
            fire_id: fire_id.clone(),
            frames: Vec::new(),
        };
        let mut annotations: BTreeMap<String, AnnotationSet> = BTreeMap::new();
        for offset in spec.offsets() {
            let label = label_from_offset(offset);
            if label && !spec.plume {
                continue; // plume disabled: positive frames absent
            }
            let (mask, polygon) = if label {
                let poly = plume_polygon(&layout, spec, offset);
                let mask = fill_polygon_exhaustive(&poly, spec.height, spec.width);
                (Some(mask), Some(poly))
            } else {
                (None, None)
            };
            let img = render_frame(spec, &layout, mask.as_ref());
            let stem = canonical_frame_stem(offset);
            let path = dir.join(format!("{stem}.png"));
            img.save(&path).map_err(|e| HarnessError::Other(format!(
                "writing {}: {e}",
                path.display()
            )))?;
            if let Some(poly) = polygon {
                annotations.insert(
                    stem.clone(),
                    AnnotationSet {
                        contours: vec![poly],
                        boxes: vec![],
                    },
                );
            }
            let (mask_pixels, tile_labels) = match &mask {
                Some(m) => (
                    m.iter().map(|&v| usize::from(v)).sum(),
                    tile_labels_by_window_count(m, grid, threshold),
                ),
                None => (0, vec![false; grid.tile_count()]),
            };
            truth.frames.push(FrameTruth {
                offset_seconds: offset,
                image_label: label,
                mask_pixels,
                tile_labels,
            });
        }
        if !annotations.is_empty() {
            write_sidecar(&dir, &annotations)?;
        }
        fires.push(truth);
        fire_ids.push(fire_id);
    }
    let manifest = default_manifest(&fire_ids);
    let manifest_path = root.join("splits.txt");
    fs::write(&manifest_path, manifest.to_text()).map_err(|source| HarnessError::Io {
        path: manifest_path.clone(),
        source,
    })?;
    Ok(CorpusTruth {
        fires,
        manifest_path,
        manifest,
    })
}
