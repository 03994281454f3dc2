use super::raster::Mask;
use super::{PreprocessError, TileGrid};

/// Default smoke detection threshold: a tile is positive when it holds
/// strictly more than this many mask pixels (0.5% of a 224x224 tile).
pub const TILE_PIXEL_THRESHOLD: u32 = 250;

/// Binary tile labels in row-major grid order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileLabelVector {
    pub labels: Vec<bool>,
    pub rows: usize,
    pub cols: usize,
}

impl TileLabelVector {
    pub fn all_negative(&self) -> bool {
        self.labels.iter().all(|&l| !l)
    }

    pub fn any_positive(&self) -> bool {
        self.labels.iter().any(|&l| l)
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.labels[row * self.cols + col]
    }

    /// The label vector after a horizontal flip of the underlying image:
    /// columns reverse within each row.
    pub fn hflipped(&self) -> TileLabelVector {
        let mut labels = Vec::with_capacity(self.labels.len());
        for r in 0..self.rows {
            for c in 0..self.cols {
                labels.push(self.get(r, self.cols - 1 - c));
            }
        }
        TileLabelVector {
            labels,
            rows: self.rows,
            cols: self.cols,
        }
    }
}

/// Count mask pixels per tile window and threshold them: positive iff the
/// count strictly exceeds `threshold`. Overlap pixels count toward every
/// tile containing them.
pub fn tile_labels(
    mask: &Mask,
    grid: &TileGrid,
    threshold: u32,
) -> Result<TileLabelVector, PreprocessError> {
    if mask.shape() != [grid.height, grid.width] {
        return Err(PreprocessError::DimensionMismatch {
            expected: format!("{}x{}", grid.height, grid.width),
            got: format!("{}x{}", mask.shape()[0], mask.shape()[1]),
        });
    }
    let t = grid.tile_size;
    let labels = grid
        .tiles
        .iter()
        .map(|tile| {
            let window = mask.slice(ndarray::s![tile.y0..tile.y0 + t, tile.x0..tile.x0 + t]);
            let count: u32 = window.iter().map(|&v| u32::from(v)).sum();
            count > threshold
        })
        .collect();
    Ok(TileLabelVector {
        labels,
        rows: grid.rows,
        cols: grid.cols,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_grid() -> TileGrid {
        TileGrid::new(144, 256, 32, 4).unwrap()
    }

    #[test]
    fn threshold_boundary_is_strict() {
        let grid = TileGrid::canonical();
        let mut mask = Mask::zeros((1040, 1856));
        // paint exactly 250 pixels into tile (0,0)'s exclusive region
        for i in 0..250usize {
            mask[[i / 50, i % 50]] = 1;
        }
        let labels = tile_labels(&mask, &grid, TILE_PIXEL_THRESHOLD).unwrap();
        assert!(!labels.labels[0], "250 pixels is negative");
        // one more pixel flips it
        mask[[50, 0]] = 1;
        let labels = tile_labels(&mask, &grid, TILE_PIXEL_THRESHOLD).unwrap();
        assert!(labels.labels[0], "251 pixels is positive");
        assert_eq!(labels.labels.iter().filter(|&&l| l).count(), 1);
    }

    #[test]
    fn empty_mask_all_negative() {
        let grid = TileGrid::canonical();
        let mask = Mask::zeros((1040, 1856));
        let labels = tile_labels(&mask, &grid, TILE_PIXEL_THRESHOLD).unwrap();
        assert_eq!(labels.labels.len(), 45);
        assert!(labels.all_negative());
    }

    #[test]
    fn overlap_pixels_count_for_both_tiles() {
        let grid = small_grid();
        // overlap band between col 0 and col 1 spans x in [28, 32)
        let mut mask = Mask::zeros((144, 256));
        for y in 0..6 {
            for x in 28..32 {
                mask[[y, x]] = 1;
            }
        }
        let labels = tile_labels(&mask, &grid, 20).unwrap();
        assert!(labels.get(0, 0));
        assert!(labels.get(0, 1));
    }

    #[test]
    fn monotone_in_added_pixels() {
        let grid = small_grid();
        let mut state = 7u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            state >> 33
        };
        let mut mask = Mask::zeros((144, 256));
        let mut prev = tile_labels(&mask, &grid, 10).unwrap();
        for _ in 0..2000 {
            let y = (next() as usize) % 144;
            let x = (next() as usize) % 256;
            mask[[y, x]] = 1;
            let cur = tile_labels(&mask, &grid, 10).unwrap();
            for (p, c) in prev.labels.iter().zip(cur.labels.iter()) {
                assert!(!(*p && !*c), "a tile flipped positive -> negative");
            }
            prev = cur;
        }
    }
}
