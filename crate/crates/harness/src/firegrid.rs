//! Per-fire prediction grid: one row per fire, one cell per 60 s slot,
//! green for correct predictions, red for incorrect, white for missing
//! frames. Emitted as a PNG raster plus a machine-readable cell table.

use std::collections::BTreeMap;
use std::path::Path;

use smokeynet_core::figlib::FRAME_SPACING_SECONDS;
use smokeynet_core::objective::FireEval;

use crate::HarnessError;

const CELL: u32 = 6;
const GREEN: [u8; 3] = [40, 160, 40];
const RED: [u8; 3] = [200, 40, 40];
const WHITE: [u8; 3] = [255, 255, 255];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellStatus {
    Correct,
    Incorrect,
    Missing,
}

pub struct FireGrid {
    pub fire_ids: Vec<String>,
    pub offsets: Vec<i32>,
    /// Row-major cells: `cells[fire][slot]`.
    pub cells: Vec<Vec<CellStatus>>,
}

/// Lay out fires over the shared 60 s offset grid spanning the evaluated
/// range; slots with no frame are missing.
pub fn build_fire_grid(fires: &[FireEval]) -> FireGrid {
    let min_off = fires
        .iter()
        .flat_map(|f| f.frames.first().map(|fr| fr.0))
        .min()
        .unwrap_or(0);
    let max_off = fires
        .iter()
        .flat_map(|f| f.frames.last().map(|fr| fr.0))
        .max()
        .unwrap_or(0);
    let offsets: Vec<i32> = (min_off / FRAME_SPACING_SECONDS..=max_off / FRAME_SPACING_SECONDS)
        .map(|i| i * FRAME_SPACING_SECONDS)
        .collect();
    let mut cells = Vec::with_capacity(fires.len());
    let mut fire_ids = Vec::with_capacity(fires.len());
    for fire in fires {
        let by_offset: BTreeMap<i32, (bool, bool)> = fire
            .frames
            .iter()
            .map(|&(off, label, pred)| (off, (label, pred)))
            .collect();
        let row: Vec<CellStatus> = offsets
            .iter()
            .map(|off| match by_offset.get(off) {
                Some((label, pred)) if label == pred => CellStatus::Correct,
                Some(_) => CellStatus::Incorrect,
                None => CellStatus::Missing,
            })
            .collect();
        cells.push(row);
        fire_ids.push(fire.fire_id.clone());
    }
    FireGrid {
        fire_ids,
        offsets,
        cells,
    }
}

/// Render the grid raster and its cell table.
pub fn render_fire_grid(
    fires: &[FireEval],
    png_path: &Path,
    table_path: &Path,
) -> Result<FireGrid, HarnessError> {
    let grid = build_fire_grid(fires);
    let width = (grid.offsets.len() as u32).max(1) * CELL;
    let height = (grid.fire_ids.len() as u32).max(1) * CELL;
    let mut img = image::RgbImage::from_pixel(width, height, image::Rgb(WHITE));
    for (row, cells) in grid.cells.iter().enumerate() {
        for (col, status) in cells.iter().enumerate() {
            let color = match status {
                CellStatus::Correct => GREEN,
                CellStatus::Incorrect => RED,
                CellStatus::Missing => WHITE,
            };
            for dy in 0..CELL {
                for dx in 0..CELL {
                    img.put_pixel(
                        col as u32 * CELL + dx,
                        row as u32 * CELL + dy,
                        image::Rgb(color),
                    );
                }
            }
        }
    }
    img.save(png_path)
        .map_err(|e| HarnessError::Other(format!("writing {}: {e}", png_path.display())))?;

    let mut table = String::from("fire_id\toffset_min\tstatus\n");
    for (fire, cells) in grid.fire_ids.iter().zip(grid.cells.iter()) {
        for (off, status) in grid.offsets.iter().zip(cells.iter()) {
            let status = match status {
                CellStatus::Correct => "correct",
                CellStatus::Incorrect => "incorrect",
                CellStatus::Missing => "missing",
            };
            table.push_str(&format!("{fire}\t{}\t{status}\n", off / 60));
        }
    }
    std::fs::write(table_path, table).map_err(|source| HarnessError::Io {
        path: table_path.to_path_buf(),
        source,
    })?;
    Ok(grid)
}
