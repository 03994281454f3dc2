//! Polygon rasterization with boundary-inclusive even-odd semantics.
//!
//! A mask pixel (x, y) is set when the pixel center (x + 0.5, y + 0.5) lies
//! inside the polygon or exactly on its boundary. The production path is a
//! scanline fill; `oracle` holds the exhaustive per-pixel reference the test
//! suites compare against, sharing only the arithmetic formulas (identical
//! crossing expressions are what make pixel-exact agreement well-defined).

use ndarray::Array2;

use crate::figlib::{AnnotationSet, BoundingBox, Polygon, SupervisionSource};

/// Binary smoke mask, one byte per pixel (0 or 1).
pub type Mask = Array2<u8>;

fn distinct_vertices(poly: &Polygon) -> usize {
    let mut seen: Vec<[f64; 2]> = Vec::new();
    for v in poly {
        if !seen.iter().any(|s| s == v) {
            seen.push(*v);
        }
    }
    seen.len()
}

fn box_polygon(b: &BoundingBox) -> Polygon {
    vec![
        [b.xmin, b.ymin],
        [b.xmax, b.ymin],
        [b.xmax, b.ymax],
        [b.xmin, b.ymax],
    ]
}

pub(crate) fn on_segment(px: f64, py: f64, a: [f64; 2], b: [f64; 2]) -> bool {
    let cross = (b[0] - a[0]) * (py - a[1]) - (b[1] - a[1]) * (px - a[0]);
    if cross != 0.0 {
        return false;
    }
    px >= a[0].min(b[0]) && px <= a[0].max(b[0]) && py >= a[1].min(b[1]) && py <= a[1].max(b[1])
}

pub(crate) fn edge_crossing(y: f64, a: [f64; 2], b: [f64; 2]) -> Option<f64> {
    if (a[1] <= y) == (b[1] <= y) {
        return None;
    }
    Some(a[0] + (y - a[1]) * (b[0] - a[0]) / (b[1] - a[1]))
}

fn edges(poly: &Polygon) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
    (0..poly.len()).map(|i| (poly[i], poly[(i + 1) % poly.len()]))
}

fn fill_polygon_scanline(mask: &mut Mask, poly: &Polygon) {
    let (h, w) = (mask.shape()[0], mask.shape()[1]);
    let min_y = poly.iter().map(|v| v[1]).fold(f64::INFINITY, f64::min);
    let max_y = poly.iter().map(|v| v[1]).fold(f64::NEG_INFINITY, f64::max);
    let y_lo = ((min_y - 0.5).ceil().max(0.0)) as i64;
    let y_hi = ((max_y - 0.5).floor()).min(h as f64 - 1.0) as i64;
    let mut crossings: Vec<f64> = Vec::new();
    for y in y_lo..=y_hi {
        if y < 0 {
            continue;
        }
        let cy = y as f64 + 0.5;
        crossings.clear();
        for (a, b) in edges(poly) {
            if let Some(xc) = edge_crossing(cy, a, b) {
                crossings.push(xc);
            }
        }
        crossings.sort_by(f64::total_cmp);
        for pair in crossings.chunks_exact(2) {
            let (c0, c1) = (pair[0], pair[1]);
            // centers in [c0, c1): closed left, open right: exactly the
            // strict ray-cast parity
            let mut xs = (c0 - 0.5).ceil() as i64;
            while (xs as f64) + 0.5 < c0 {
                xs += 1;
            }
            let mut xe = (c1 - 0.5).floor() as i64;
            while (xe as f64) + 0.5 >= c1 {
                xe -= 1;
            }
            let xs = xs.max(0);
            let xe = xe.min(w as i64 - 1);
            for x in xs..=xe {
                mask[[y as usize, x as usize]] = 1;
            }
        }
    }
    // boundary pass: pixel centers lying exactly on an edge are included
    for (a, b) in edges(poly) {
        if a[1] == b[1] {
            let yf = a[1] - 0.5;
            if yf.fract() == 0.0 && yf >= 0.0 && yf < h as f64 {
                let y = yf as usize;
                let x_lo = ((a[0].min(b[0]) - 0.5).ceil().max(0.0)) as i64;
                let x_hi = ((a[0].max(b[0]) - 0.5).floor()).min(w as f64 - 1.0) as i64;
                for x in x_lo..=x_hi {
                    if on_segment(x as f64 + 0.5, a[1], a, b) {
                        mask[[y, x as usize]] = 1;
                    }
                }
            }
            continue;
        }
        let e_lo = (((a[1].min(b[1]) - 0.5).ceil()).max(0.0)) as i64;
        let e_hi = ((a[1].max(b[1]) - 0.5).floor()).min(h as f64 - 1.0) as i64;
        for y in e_lo..=e_hi {
            let cy = y as f64 + 0.5;
            let xc = a[0] + (cy - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            for x in ((xc - 0.5).floor() as i64 - 1)..=((xc - 0.5).ceil() as i64 + 1) {
                if x < 0 || x >= w as i64 {
                    continue;
                }
                if on_segment(x as f64 + 0.5, cy, a, b) {
                    mask[[y as usize, x as usize]] = 1;
                }
            }
        }
    }
}

/// Rasterize the frame's supervision regions onto a binary mask.
///
/// Contour sources fill polygons; box sources fill the bounding boxes as
/// polygons. Degenerate polygons (under three distinct vertices) are skipped
/// with a warning. Excluded sources produce an all-zero mask.
pub fn rasterize_regions(
    annotation: &AnnotationSet,
    kind: SupervisionSource,
    height: usize,
    width: usize,
) -> (Mask, Vec<String>) {
    let mut mask = Mask::zeros((height, width));
    let mut warnings = Vec::new();
    let polygons: Vec<Polygon> = match kind {
        SupervisionSource::Contour => annotation.contours.clone(),
        SupervisionSource::BoxFill => annotation.boxes.iter().map(box_polygon).collect(),
        SupervisionSource::Excluded => Vec::new(),
    };
    for (i, poly) in polygons.iter().enumerate() {
        if distinct_vertices(poly) < 3 {
            warnings.push(format!(
                "skipping degenerate polygon {i} with {} distinct vertices",
                distinct_vertices(poly)
            ));
            continue;
        }
        fill_polygon_scanline(&mut mask, poly);
    }
    (mask, warnings)
}

/// Exhaustive reference implementations used by the oracle tests.
pub mod oracle {
    use super::{on_segment, Mask, Polygon};

    /// Boundary-inclusive even-odd point-in-polygon test.
    pub fn point_inside(px: f64, py: f64, poly: &Polygon) -> bool {
        let n = poly.len();
        for i in 0..n {
            if on_segment(px, py, poly[i], poly[(i + 1) % n]) {
                return true;
            }
        }
        let mut odd = false;
        for i in 0..n {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            if (a[1] <= py) != (b[1] <= py) {
                let xc = a[0] + (py - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
                if px < xc {
                    odd = !odd;
                }
            }
        }
        odd
    }

    /// Brute-force fill: test every pixel center against every polygon.
    pub fn fill_mask(polys: &[Polygon], height: usize, width: usize) -> Mask {
        let mut mask = Mask::zeros((height, width));
        for y in 0..height {
            for x in 0..width {
                let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
                if polys.iter().any(|p| point_inside(cx, cy, p)) {
                    mask[[y, x]] = 1;
                }
            }
        }
        mask
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::figlib::AnnotationSet;

    fn square(x0: f64, y0: f64, side: f64) -> Polygon {
        vec![
            [x0, y0],
            [x0 + side, y0],
            [x0 + side, y0 + side],
            [x0, y0 + side],
        ]
    }

    #[test]
    fn ten_by_ten_square_fills_hundred_pixels() {
        let ann = AnnotationSet {
            contours: vec![square(0.0, 0.0, 10.0)],
            boxes: vec![],
        };
        let (mask, warns) = rasterize_regions(&ann, SupervisionSource::Contour, 20, 20);
        assert!(warns.is_empty());
        assert_eq!(mask.iter().map(|&v| v as usize).sum::<usize>(), 100);
    }

    #[test]
    fn empty_annotation_fills_nothing() {
        let ann = AnnotationSet::default();
        let (mask, _) = rasterize_regions(&ann, SupervisionSource::Contour, 16, 16);
        assert_eq!(mask.sum(), 0);
    }

    #[test]
    fn triangle_matches_bruteforce_scan() {
        let tri: Polygon = vec![[0.0, 0.0], [20.0, 0.0], [0.0, 20.0]];
        let ann = AnnotationSet {
            contours: vec![tri.clone()],
            boxes: vec![],
        };
        let (mask, _) = rasterize_regions(&ann, SupervisionSource::Contour, 24, 24);
        let want = oracle::fill_mask(&[tri], 24, 24);
        assert_eq!(mask, want);
        assert!(mask.iter().map(|&v| v as usize).sum::<usize>() > 0);
    }

    #[test]
    fn box_fill_is_rectangle() {
        let ann = AnnotationSet {
            contours: vec![],
            boxes: vec![crate::figlib::BoundingBox {
                xmin: 2.0,
                ymin: 3.0,
                xmax: 7.0,
                ymax: 6.0,
            }],
        };
        let (mask, _) = rasterize_regions(&ann, SupervisionSource::BoxFill, 10, 10);
        assert_eq!(mask.iter().map(|&v| v as usize).sum::<usize>(), 5 * 3);
        assert_eq!(mask[[3, 2]], 1);
        assert_eq!(mask[[5, 6]], 1);
        assert_eq!(mask[[6, 7]], 0);
    }

    #[test]
    fn degenerate_polygon_skipped_with_warning() {
        let ann = AnnotationSet {
            contours: vec![vec![[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]], square(0.0, 0.0, 4.0)],
            boxes: vec![],
        };
        let (mask, warns) = rasterize_regions(&ann, SupervisionSource::Contour, 8, 8);
        assert_eq!(warns.len(), 1);
        assert_eq!(mask.iter().map(|&v| v as usize).sum::<usize>(), 16);
    }

    #[test]
    fn excluded_source_yields_empty_mask() {
        let ann = AnnotationSet {
            contours: vec![square(0.0, 0.0, 8.0)],
            boxes: vec![],
        };
        let (mask, _) = rasterize_regions(&ann, SupervisionSource::Excluded, 8, 8);
        assert_eq!(mask.sum(), 0);
    }

    #[test]
    fn out_of_bounds_vertices_are_clipped() {
        let ann = AnnotationSet {
            contours: vec![square(-5.0, -5.0, 10.0)],
            boxes: vec![],
        };
        let (mask, _) = rasterize_regions(&ann, SupervisionSource::Contour, 8, 8);
        // only the in-frame quadrant fills: centers 0.5..4.5 in each axis
        assert_eq!(mask.iter().map(|&v| v as usize).sum::<usize>(), 25);
    }

    #[test]
    fn random_polygons_match_oracle() {
        let mut state = 0x12345678u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for case in 0..60 {
            let nverts = 3 + (next() * 9.0) as usize;
            let poly: Polygon = (0..nverts)
                .map(|_| [next() * 40.0, next() * 40.0])
                .collect();
            let ann = AnnotationSet {
                contours: vec![poly.clone()],
                boxes: vec![],
            };
            let (mask, _) = rasterize_regions(&ann, SupervisionSource::Contour, 40, 40);
            let want = oracle::fill_mask(&[poly], 40, 40);
            assert_eq!(mask, want, "case {case}");
        }
    }

    #[test]
    fn integer_vertices_match_oracle() {
        // integer-coordinate polygons make centers land exactly on edges
        let polys: Vec<Polygon> = vec![
            vec![[1.0, 1.0], [9.0, 1.0], [9.0, 9.0], [1.0, 9.0]],
            vec![[0.0, 0.0], [12.0, 0.0], [6.0, 9.0]],
            vec![[2.5, 0.5], [11.5, 3.5], [4.5, 11.5]],
        ];
        for poly in polys {
            let ann = AnnotationSet {
                contours: vec![poly.clone()],
                boxes: vec![],
            };
            let (mask, _) = rasterize_regions(&ann, SupervisionSource::Contour, 14, 14);
            assert_eq!(mask, oracle::fill_mask(&[poly], 14, 14));
        }
    }
}
