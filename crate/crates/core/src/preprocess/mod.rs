//! Deterministic geometric pipeline (resize, crop, tile, rasterize, tile
//! labels) plus stochastic augmentation, normalization, and the background
//! channel.

mod augment;
mod background;
pub mod dump;
mod geometry;
mod labels;
pub mod raster;

pub use augment::{augment_group, AugmentationPolicy};
pub use background::{background_channel, BackgroundSubtractor, FrameDiff};
pub use geometry::{resize_and_crop, tile_image, GeometryConfig, GeometryMap, Tile, TileGrid};
pub use labels::{tile_labels, TileLabelVector, TILE_PIXEL_THRESHOLD};
pub use raster::{rasterize_regions, Mask};

use ndarray::Array3;
use smokeynet_autograd::Scalar;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },
    #[error("io error at {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error("image decode error at {path}: {source}")]
    Decode {
        path: std::path::PathBuf,
        source: image::ImageError,
    },
}

/// Channel-major raster: (channels, height, width), values in [0, 1] before
/// normalization and in [-1, 1] afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer<T: Scalar> {
    pub data: Array3<T>,
}

impl<T: Scalar> ImageBuffer<T> {
    pub fn new(data: Array3<T>) -> Self {
        let c = data.shape()[0];
        assert!(c == 1 || c == 3, "1 or 3 channels, got {c}");
        ImageBuffer { data }
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::new(Array3::zeros((channels, height, width)))
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.data.shape()[2]
    }

    /// Load from an image file, scaling 8-bit samples to [0, 1].
    pub fn load(path: &std::path::Path) -> Result<Self, PreprocessError> {
        let img = image::open(path)
            .map_err(|source| PreprocessError::Decode {
                path: path.to_path_buf(),
                source,
            })?
            .to_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut data = Array3::zeros((3, h, w));
        let scale = T::of_f64(1.0 / 255.0);
        for (x, y, p) in img.enumerate_pixels() {
            for c in 0..3 {
                data[[c, y as usize, x as usize]] = T::of_usize(p.0[c] as usize) * scale;
            }
        }
        Ok(ImageBuffer::new(data))
    }
}

/// Map [0, 1] pixels to mean 0.5 / std 0.5, i.e. out = (in - 0.5) / 0.5.
pub fn normalize<T: Scalar>(image: &ImageBuffer<T>) -> ImageBuffer<T> {
    let half = T::of_f64(0.5);
    ImageBuffer::new(image.data.mapv(|v| (v - half) / half))
}

/// Exact inverse of [`normalize`].
pub fn denormalize<T: Scalar>(image: &ImageBuffer<T>) -> ImageBuffer<T> {
    let half = T::of_f64(0.5);
    ImageBuffer::new(image.data.mapv(|v| v * half + half))
}
