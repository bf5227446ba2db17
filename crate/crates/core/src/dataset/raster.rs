//! Even-odd polygon fill sampled at pixel centers.
//!
//! Pixel `(row i, col j)` is set iff its center `(j + 0.5, i + 0.5)` has an
//! odd number of ring edges crossing the ray towards `+x`. An edge from `a`
//! to `b` crosses the row iff exactly one endpoint lies strictly below
//! `py`, which keeps horizontal edges and shared vertices consistent.

use super::{DatasetError, Point, PolygonAnnotation};
use crate::mask::BinaryMask;

pub fn rasterize_polygon(
    polygon: &PolygonAnnotation,
    width: u32,
    height: u32,
) -> Result<BinaryMask, DatasetError> {
    if polygon.rings.is_empty() || polygon.rings.iter().any(|r| r.len() < 3) {
        return Err(DatasetError::DegeneratePolygon {
            annotation_id: polygon.annotation_id,
        });
    }
    Ok(rasterize_rings(&polygon.rings, width, height))
}

/// Fills all rings jointly; crossings from every ring share one parity, which
/// is the XOR of the per-ring fills.
pub fn rasterize_rings(rings: &[Vec<Point>], width: u32, height: u32) -> BinaryMask {
    let mut mask = BinaryMask::new(width, height);
    let w = width as usize;
    let mut xs: Vec<f64> = Vec::new();
    for row in 0..height as usize {
        let py = row as f64 + 0.5;
        xs.clear();
        for ring in rings {
            let n = ring.len();
            for k in 0..n {
                let a = ring[k];
                let b = ring[(k + 1) % n];
                if (a.y > py) != (b.y > py) {
                    xs.push(a.x + (py - a.y) * (b.x - a.x) / (b.y - a.y));
                }
            }
        }
        if xs.is_empty() {
            continue;
        }
        xs.sort_by(f64::total_cmp);
        let cells = &mut mask.cells_mut()[row * w..(row + 1) * w];
        // Odd crossing count to the right of px <=> x[2k] <= px < x[2k+1].
        for span in xs.chunks_exact(2) {
            let (lo, hi) = (span[0], span[1]);
            let first = ((lo - 0.5).ceil().max(0.0) as usize).saturating_sub(1);
            let last = ((hi - 0.5).ceil().max(0.0) as usize + 1).min(w);
            for (col, cell) in cells.iter_mut().enumerate().take(last).skip(first) {
                let px = col as f64 + 0.5;
                if lo <= px && px < hi {
                    *cell = true;
                }
            }
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::class_from_name;

    fn poly(pts: &[(f64, f64)]) -> PolygonAnnotation {
        PolygonAnnotation::single(
            1,
            1,
            class_from_name("5").unwrap(),
            pts.iter().map(|&(x, y)| Point::new(x, y)).collect(),
        )
    }

    #[test]
    fn square_on_8x8() {
        let m = rasterize_polygon(&poly(&[(0., 0.), (4., 0.), (4., 4.), (0., 4.)]), 8, 8).unwrap();
        assert_eq!(m.count(), 16);
        for y in 0..8 {
            for x in 0..8 {
                assert_eq!(m.get(x, y), x < 4 && y < 4);
            }
        }
    }

    #[test]
    fn collinear_triangle_is_empty() {
        let m = rasterize_polygon(&poly(&[(0., 0.), (3., 3.), (6., 6.)]), 8, 8).unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn full_frame() {
        let m = rasterize_polygon(&poly(&[(0., 0.), (7., 0.), (7., 5.), (0., 5.)]), 7, 5).unwrap();
        assert_eq!(m.count(), 35);
    }

    #[test]
    fn degenerate() {
        assert!(matches!(
            rasterize_polygon(&poly(&[(0., 0.), (3., 3.)]), 8, 8),
            Err(DatasetError::DegeneratePolygon { .. })
        ));
    }

    #[test]
    fn inner_ring_cuts_hole() {
        let outer = vec![Point::new(0., 0.), Point::new(6., 0.), Point::new(6., 6.), Point::new(0., 6.)];
        let inner = vec![Point::new(2., 2.), Point::new(4., 2.), Point::new(4., 4.), Point::new(2., 4.)];
        let m = rasterize_rings(&[outer, inner], 8, 8);
        assert_eq!(m.count(), 36 - 4);
        assert!(!m.get(2, 2));
        assert!(m.get(1, 1));
    }
}
