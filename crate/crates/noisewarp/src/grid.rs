//! Grid-based partition construction.
//!
//! Each destination pixel's unit square is pushed through the deformation
//! map: its 4 corners and 4 edge midpoints are displaced by the bilinearly
//! interpolated flow, giving an octagon that approximates the deformed
//! region. The octagon is clipped against every grid cell in its bounding
//! box; each positive clipped area becomes a partition entry for that cell.
//!
//! Adjacent destination squares share their boundary sample points, so their
//! octagons tile the plane exactly (no gaps or double coverage) whenever the
//! discretized map does not fold. Interior sources then receive entries
//! summing to 1 up to rounding; folds oversubscribe sources and are handled
//! later by the warp kernel's clamp.

use crate::error::{Error, Result};
use crate::geom::{bounding_box, polygon_area, ClipScratch, Point};
use crate::record::{DestMajorBuf, PartitionRecord, MIN_AREA};
use crate::tensor::FlowField;

/// Boundary sample offsets of the unit square in cyclic order: corners
/// interleaved with edge midpoints.
const OCTAGON_OFFSETS: [[f64; 2]; 8] = [
    [0.0, 0.0],
    [0.0, 0.5],
    [0.0, 1.0],
    [0.5, 1.0],
    [1.0, 1.0],
    [1.0, 0.5],
    [1.0, 0.0],
    [0.5, 0.0],
];

/// Deformed outline of destination pixel `(i0, i1)`: the square's boundary
/// samples displaced by `psi(x) = x + flow(x)`.
pub fn warp_square_to_octagon(flow: &FlowField, i0: usize, i1: usize) -> [Point; 8] {
    let mut out = [[0.0f64; 2]; 8];
    for (v, off) in out.iter_mut().zip(OCTAGON_OFFSETS) {
        let p = [i0 as f64 + off[0], i1 as f64 + off[1]];
        let f = flow.sample_bilinear(p);
        *v = [p[0] + f[0], p[1] + f[1]];
    }
    out
}

/// Builds the partition record for a 2-D flow by octagon clipping.
pub fn build_grid_partition(flow: &FlowField) -> Result<PartitionRecord> {
    if flow.dims() != 2 {
        return Err(Error::invalid(format!(
            "grid partition requires a 2-D flow, got rank {}",
            flow.dims()
        )));
    }
    if flow.has_non_finite() {
        return Err(Error::invalid("flow field contains non-finite values"));
    }
    let (h, w) = (flow.shape()[0], flow.shape()[1]);
    let n_pix = h * w;

    let mut buf = DestMajorBuf::with_dest_count(n_pix);
    let mut scratch = ClipScratch::default();
    let mut strip: Vec<Point> = Vec::new();

    for i0 in 0..h {
        for i1 in 0..w {
            let oct = warp_square_to_octagon(flow, i0, i1);
            let (lo, hi) = bounding_box(&oct);
            // Raw cell index ranges; the clamped ranges drive the clip loop,
            // but containment must be judged on the raw ones (an octagon
            // spilling past the grid edge clamps to a single cell without
            // being contained in it).
            let r0_lo = lo[0].floor() as i64;
            let r0_hi = (hi[0].ceil() as i64) - 1;
            let r1_lo = lo[1].floor() as i64;
            let r1_hi = (hi[1].ceil() as i64) - 1;
            let c0_lo = r0_lo.max(0);
            let c0_hi = r0_hi.min(h as i64 - 1);
            let c1_lo = r1_lo.max(0);
            let c1_hi = r1_hi.min(w as i64 - 1);

            if c0_lo > c0_hi || c1_lo > c1_hi {
                buf.finish_dest();
                continue;
            }
            if r0_lo == r0_hi && r1_lo == r1_hi {
                // Octagon contained in a single cell: no clipping needed.
                let area = polygon_area(&oct);
                if area >= MIN_AREA {
                    buf.push((c0_lo as usize * w + c1_lo as usize) as u32, area);
                }
                buf.finish_dest();
                continue;
            }
            for c0 in c0_lo..=c0_hi {
                strip.clear();
                strip.extend_from_slice(scratch.slab(&oct, 0, c0 as f64, c0 as f64 + 1.0));
                if strip.len() < 3 {
                    continue;
                }
                for c1 in c1_lo..=c1_hi {
                    let piece = scratch.slab(&strip, 1, c1 as f64, c1 as f64 + 1.0);
                    let area = polygon_area(piece);
                    if area >= MIN_AREA {
                        buf.push((c0 as usize * w + c1 as usize) as u32, area);
                    }
                }
            }
            buf.finish_dest();
        }
    }
    PartitionRecord::from_dest_major(&[h, w], buf, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::FlowField;

    #[test]
    fn identity_flow_yields_the_identity_record() {
        let flow = FlowField::zeros(&[5, 4]).unwrap();
        let rec = build_grid_partition(&flow).unwrap();
        assert_eq!(rec.n_entries(), 20);
        for s in 0..20 {
            let (a, d) = rec.entries(s);
            assert_eq!(d, &[s as u32]);
            // Exactly 1.0: the unit square's shoelace sum involves only
            // halves and ones, all exact in binary.
            assert_eq!(a, &[1.0]);
        }
    }

    #[test]
    fn integer_shift_relabels_sources() {
        // Displace every pixel by +1 along axis 0: destination (i0, i1)'s
        // square lands on cell (i0+1, i1). The first source row serves
        // nobody and the last destination row receives nothing.
        let (h, w) = (4usize, 3usize);
        let flow = FlowField::from_fn(&[h, w], |_| vec![1.0, 0.0]).unwrap();
        let rec = build_grid_partition(&flow).unwrap();
        for u0 in 0..h {
            for u1 in 0..w {
                let (a, d) = rec.entries(u0 * w + u1);
                if u0 == 0 {
                    assert!(d.is_empty());
                } else {
                    assert_eq!(d, &[((u0 - 1) * w + u1) as u32]);
                    assert_eq!(a, &[1.0]);
                }
            }
        }
    }

    #[test]
    fn half_pixel_shift_splits_areas_evenly() {
        // +0.5 along axis 1: each source column is covered half by its own
        // destination and half by the destination one column to the left.
        let (h, w) = (4usize, 4usize);
        let flow = FlowField::from_fn(&[h, w], |_| vec![0.0, 0.5]).unwrap();
        let rec = build_grid_partition(&flow).unwrap();
        for u0 in 0..h {
            let (a, d) = rec.entries(u0 * w);
            assert_eq!(d, &[(u0 * w) as u32]);
            assert!((a[0] - 0.5).abs() < 1e-12);
            for u1 in 1..w {
                let (a, d) = rec.entries(u0 * w + u1);
                assert_eq!(d, &[(u0 * w + u1 - 1) as u32, (u0 * w + u1) as u32]);
                assert!((a[0] - 0.5).abs() < 1e-12);
                assert!((a[1] - 0.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn octagon_matches_analytic_displacement_for_affine_flow() {
        // Shear: flow(x) = (0, 0.2 x0). Bilinear interpolation reproduces
        // affine flows exactly, so every boundary sample must land at
        // p + (0, 0.2 p0). The shear has unit Jacobian, so the octagon keeps
        // area 1.
        let flow = FlowField::from_fn(&[8, 8], |c| vec![0.0, 0.2 * c[0]]).unwrap();
        let oct = warp_square_to_octagon(&flow, 3, 4);
        for (v, off) in oct.iter().zip(super::OCTAGON_OFFSETS) {
            let p = [3.0 + off[0], 4.0 + off[1]];
            assert!((v[0] - p[0]).abs() < 1e-12);
            assert!((v[1] - (p[1] + 0.2 * p[0])).abs() < 1e-12);
        }
        assert!((polygon_area(&oct) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn smooth_flow_partitions_interior_sources_to_unity() {
        // A gentle vortex: neighboring octagons share boundary samples, so
        // interior sources must be tiled exactly (up to rounding).
        let d = 16usize;
        let flow = FlowField::from_fn(&[d, d], |c| {
            let (dy, dx) = (c[0] - 8.0, c[1] - 8.0);
            let s = 0.9 * (-(dy * dy + dx * dx) / 18.0).exp();
            vec![-s * dx, s * dy]
        })
        .unwrap();
        let rec = build_grid_partition(&flow).unwrap();
        // Stay away from the border, where octagons legitimately spill off
        // the grid or cells are only partially covered.
        for u0 in 3..d - 3 {
            for u1 in 3..d - 3 {
                let sum = rec.source_sum(u0 * d + u1);
                assert!(
                    (sum - 1.0).abs() < 1e-6,
                    "source ({u0},{u1}) covered with {sum}"
                );
            }
        }
    }

    #[test]
    fn non_finite_flow_is_rejected() {
        let mut flow = FlowField::zeros(&[3, 3]).unwrap();
        let data_len = flow.data().len();
        let mut data = flow.data().to_vec();
        data[data_len / 2] = f64::NAN;
        flow = FlowField::from_vec(&[3, 3], data).unwrap();
        assert!(build_grid_partition(&flow).is_err());
    }
}
