use smokeynet_autograd::Scalar;

use super::{ImageBuffer, PreprocessError};

/// Geometry of the deterministic pipeline: bilinear resize to a fixed size,
/// then removal of a fixed band of top rows, then overlapped tiling.
///
/// The full-resolution preset resizes to 1392 x 1856, crops the top 352 rows
/// to 1040 x 1856, and tiles with 224-pixel tiles overlapping by 20. Reduced
/// presets keep the same 5 x 9 grid with proportionally scaled tiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeometryConfig {
    pub resize_height: usize,
    pub resize_width: usize,
    pub crop_top: usize,
    pub tile_size: usize,
    pub tile_overlap: usize,
}

impl GeometryConfig {
    /// Full-resolution geometry: 1392x1856 resize, 352-row crop, 224/20 tiles.
    pub fn full() -> Self {
        GeometryConfig {
            resize_height: 1392,
            resize_width: 1856,
            crop_top: 352,
            tile_size: 224,
            tile_overlap: 20,
        }
    }

    /// Quarter-scale geometry used by the synthetic desk-scale corpus:
    /// 348x464 resize, 88-row crop to 260x464, 56/5 tiles. Same 5x9 grid.
    pub fn quarter() -> Self {
        GeometryConfig {
            resize_height: 348,
            resize_width: 464,
            crop_top: 88,
            tile_size: 56,
            tile_overlap: 5,
        }
    }

    /// Eighth-ish scale for fast tests: 176x256 resize, 32-row crop to
    /// 144x256, 32/4 tiles. Same 5x9 grid.
    pub fn eighth() -> Self {
        GeometryConfig {
            resize_height: 176,
            resize_width: 256,
            crop_top: 32,
            tile_size: 32,
            tile_overlap: 4,
        }
    }

    /// Desk-scale identity geometry for the synthetic corpus: 72x128 frames
    /// taken as-is (no resize, no crop), 16/2 tiles. Same 5x9 grid.
    pub fn desk() -> Self {
        GeometryConfig {
            resize_height: 72,
            resize_width: 128,
            crop_top: 0,
            tile_size: 16,
            tile_overlap: 2,
        }
    }

    pub fn processed_height(&self) -> usize {
        self.resize_height - self.crop_top
    }

    pub fn processed_width(&self) -> usize {
        self.resize_width
    }

    pub fn grid(&self) -> Result<TileGrid, PreprocessError> {
        TileGrid::new(
            self.processed_height(),
            self.processed_width(),
            self.tile_size,
            self.tile_overlap,
        )
    }
}

/// The scale-then-translate map that carries original-image coordinates
/// into post-crop coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryMap {
    pub scale_x: f64,
    pub scale_y: f64,
    pub crop_top: f64,
}

impl GeometryMap {
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (x * self.scale_x, y * self.scale_y - self.crop_top)
    }

    pub fn apply_polygon(&self, poly: &[[f64; 2]]) -> Vec<[f64; 2]> {
        poly.iter()
            .map(|&[x, y]| {
                let (nx, ny) = self.apply(x, y);
                [nx, ny]
            })
            .collect()
    }
}

/// One tile window: grid position and top-left pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tile {
    pub row: usize,
    pub col: usize,
    pub y0: usize,
    pub x0: usize,
}

/// Deterministic decomposition of a processed image into overlapping square
/// tiles; the last tile in each axis ends exactly at the image edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileGrid {
    pub height: usize,
    pub width: usize,
    pub tile_size: usize,
    pub overlap: usize,
    pub stride: usize,
    pub rows: usize,
    pub cols: usize,
    pub tiles: Vec<Tile>,
}

impl TileGrid {
    pub fn new(
        height: usize,
        width: usize,
        tile_size: usize,
        overlap: usize,
    ) -> Result<Self, PreprocessError> {
        if tile_size == 0 || overlap >= tile_size {
            return Err(PreprocessError::Geometry(format!(
                "tile size {tile_size} with overlap {overlap} is not a valid window"
            )));
        }
        let stride = tile_size - overlap;
        if height < tile_size || width < tile_size {
            return Err(PreprocessError::Geometry(format!(
                "image {height}x{width} smaller than tile {tile_size}"
            )));
        }
        if (height - tile_size) % stride != 0 || (width - tile_size) % stride != 0 {
            return Err(PreprocessError::Geometry(format!(
                "tiles of {tile_size} with stride {stride} do not cover {height}x{width} exactly"
            )));
        }
        let rows = (height - tile_size) / stride + 1;
        let cols = (width - tile_size) / stride + 1;
        let mut tiles = Vec::with_capacity(rows * cols);
        for row in 0..rows {
            for col in 0..cols {
                tiles.push(Tile {
                    row,
                    col,
                    y0: row * stride,
                    x0: col * stride,
                });
            }
        }
        Ok(TileGrid {
            height,
            width,
            tile_size,
            overlap,
            stride,
            rows,
            cols,
            tiles,
        })
    }

    /// The canonical full-resolution grid: 1040x1856 into 45 tiles of
    /// 224x224 at stride 204 (5 rows x 9 cols).
    pub fn canonical() -> Self {
        Self::new(1040, 1856, 224, 20).expect("canonical grid is exact")
    }

    pub fn tile_count(&self) -> usize {
        self.rows * self.cols
    }

    /// Tiles covering a pixel (row-major order).
    pub fn covering_tiles(&self, y: usize, x: usize) -> Vec<usize> {
        self.tiles
            .iter()
            .enumerate()
            .filter(|(_, t)| {
                y >= t.y0 && y < t.y0 + self.tile_size && x >= t.x0 && x < t.x0 + self.tile_size
            })
            .map(|(i, _)| i)
            .collect()
    }
}

fn bilinear_resize<T: Scalar>(src: &ImageBuffer<T>, out_h: usize, out_w: usize) -> ImageBuffer<T> {
    let (c, h, w) = (src.channels(), src.height(), src.width());
    if h == out_h && w == out_w {
        return src.clone();
    }
    let mut out = ImageBuffer::zeros(c, out_h, out_w);
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    // precompute x-axis weights once per row sweep
    let mut x_lut = Vec::with_capacity(out_w);
    for ox in 0..out_w {
        let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
        let x0 = fx.floor() as usize;
        let x1 = (x0 + 1).min(w - 1);
        x_lut.push((x0, x1, fx - x0 as f64));
    }
    for ci in 0..c {
        for oy in 0..out_h {
            let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(h - 1);
            let wy = T::of_f64(fy - y0 as f64);
            let one = T::one();
            for (ox, &(x0, x1, wxf)) in x_lut.iter().enumerate() {
                let wx = T::of_f64(wxf);
                let p00 = src.data[[ci, y0, x0]];
                let p01 = src.data[[ci, y0, x1]];
                let p10 = src.data[[ci, y1, x0]];
                let p11 = src.data[[ci, y1, x1]];
                let top = p00 * (one - wx) + p01 * wx;
                let bot = p10 * (one - wx) + p11 * wx;
                out.data[[ci, oy, ox]] = top * (one - wy) + bot * wy;
            }
        }
    }
    out
}

/// Resize to the configured size, then crop the configured top rows.
///
/// Returns the processed image, the coordinate map for annotations, and a
/// warning when the input resolution is not one of the expected camera
/// formats (1536x2048 or 2048x3072 at full scale).
pub fn resize_and_crop<T: Scalar>(
    image: &ImageBuffer<T>,
    cfg: &GeometryConfig,
) -> Result<(ImageBuffer<T>, GeometryMap, Option<String>), PreprocessError> {
    if cfg.crop_top >= cfg.resize_height {
        return Err(PreprocessError::Geometry(format!(
            "crop of {} rows consumes the whole {}-row resized image",
            cfg.crop_top, cfg.resize_height
        )));
    }
    let (h, w) = (image.height(), image.width());
    let warning = if *cfg == GeometryConfig::full()
        && !matches!((h, w), (1536, 2048) | (2048, 3072))
    {
        Some(format!(
            "unexpected input resolution {h}x{w}; resizing to {}x{} anyway",
            cfg.resize_height, cfg.resize_width
        ))
    } else {
        None
    };
    let resized = bilinear_resize(image, cfg.resize_height, cfg.resize_width);
    let cropped = resized
        .data
        .slice(ndarray::s![.., cfg.crop_top.., ..])
        .to_owned();
    let map = GeometryMap {
        scale_x: cfg.resize_width as f64 / w as f64,
        scale_y: cfg.resize_height as f64 / h as f64,
        crop_top: cfg.crop_top as f64,
    };
    Ok((ImageBuffer::new(cropped), map, warning))
}

/// Cut an image into the grid's tile windows, row-major.
pub fn tile_image<T: Scalar>(
    image: &ImageBuffer<T>,
    grid: &TileGrid,
) -> Result<Vec<ImageBuffer<T>>, PreprocessError> {
    if image.height() != grid.height || image.width() != grid.width {
        return Err(PreprocessError::DimensionMismatch {
            expected: format!("{}x{}", grid.height, grid.width),
            got: format!("{}x{}", image.height(), image.width()),
        });
    }
    let t = grid.tile_size;
    Ok(grid
        .tiles
        .iter()
        .map(|tile| {
            ImageBuffer::new(
                image
                    .data
                    .slice(ndarray::s![.., tile.y0..tile.y0 + t, tile.x0..tile.x0 + t])
                    .to_owned(),
            )
        })
        .collect())
}
