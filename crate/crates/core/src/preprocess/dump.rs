//! Debug dump formats: a raw binary raster for masks and an ASCII line for
//! tile labels.
//!
//! Mask raster: 16-byte header (4-byte magic `SMKM`, u32 LE height, u32 LE
//! width, 4 reserved zero bytes) followed by height*width bytes, one per
//! pixel, row-major, each 0 or 1.

use std::io::{self, Read, Write};

use ndarray::Array2;

use super::raster::Mask;
use super::TileLabelVector;

const MASK_MAGIC: &[u8; 4] = b"SMKM";

pub fn write_mask<W: Write>(mut w: W, mask: &Mask) -> io::Result<()> {
    let (h, width) = (mask.shape()[0], mask.shape()[1]);
    w.write_all(MASK_MAGIC)?;
    w.write_all(&(h as u32).to_le_bytes())?;
    w.write_all(&(width as u32).to_le_bytes())?;
    w.write_all(&[0u8; 4])?;
    let std = mask.as_standard_layout();
    w.write_all(std.as_slice().expect("standard layout"))?;
    Ok(())
}

pub fn read_mask<R: Read>(mut r: R) -> io::Result<Mask> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    if &header[0..4] != MASK_MAGIC {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "bad mask magic"));
    }
    let h = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let w = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let mut data = vec![0u8; h * w];
    r.read_exact(&mut data)?;
    Array2::from_shape_vec((h, w), data)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))
}

/// Tile labels as ASCII 0/1 characters, row-major (45 characters for the
/// canonical grid).
pub fn tile_labels_ascii(labels: &TileLabelVector) -> String {
    labels
        .labels
        .iter()
        .map(|&l| if l { '1' } else { '0' })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_roundtrip() {
        let mut mask = Mask::zeros((5, 7));
        mask[[2, 3]] = 1;
        mask[[4, 6]] = 1;
        let mut buf = Vec::new();
        write_mask(&mut buf, &mask).unwrap();
        assert_eq!(buf.len(), 16 + 35);
        assert_eq!(&buf[0..4], b"SMKM");
        let back = read_mask(&buf[..]).unwrap();
        assert_eq!(back, mask);
    }

    #[test]
    fn ascii_dump_is_row_major() {
        let labels = TileLabelVector {
            labels: vec![true, false, false, true],
            rows: 2,
            cols: 2,
        };
        assert_eq!(tile_labels_ascii(&labels), "1001");
    }
}
