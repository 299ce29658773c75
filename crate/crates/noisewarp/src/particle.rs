//! Particle-based partition construction.
//!
//! Instead of deforming pixel outlines, each destination pixel is reduced to
//! a single particle at the deformed position of its center. The particle
//! distributes its request over the surrounding cells with multilinear
//! kernel weights, and every cell that received any requests rescales them
//! to sum to exactly 1. The result is a strict per-source partition of
//! unity, so the warp kernel's clamp can never engage; the price is a
//! coarser approximation of the deformed geometry than the grid builder.
//!
//! Kernel mass falling outside the grid is dropped, exactly as the grid
//! builder loses octagon area that spills off the domain: a particle whose
//! deformed center leaves the grid entirely vacates its destination, and one
//! near the border delivers only its in-grid weight (the warp kernel's
//! delivered-time normalization restores unit variance). Clamping positions
//! to the border instead would pile several boundary destinations onto one
//! source row and break the exact-shift semantics.
//!
//! The same construction works in two and three dimensions (bilinear and
//! trilinear kernels).

use crate::error::{Error, Result};
use crate::record::{DestMajorBuf, PartitionRecord, MIN_AREA};
use crate::tensor::{coords_of, FlowField};

/// Multilinear kernel decomposition of a point against the pixel-center
/// grid: base index and fractional offset per axis.
///
/// Positions may lie anywhere; cells outside the grid are filtered by the
/// caller. A position exactly on a cell center yields that cell with weight
/// 1 and its neighbor with weight 0.
#[inline]
fn kernel_base<const D: usize>(p: [f64; D]) -> ([i64; D], [f64; D]) {
    let mut base = [0i64; D];
    let mut frac = [0.0f64; D];
    for k in 0..D {
        let s = p[k] - 0.5;
        let b = s.floor();
        base[k] = b as i64;
        frac[k] = s - b;
    }
    (base, frac)
}

/// The `2^D` cells and multilinear weights a particle at `p` distributes
/// over. Weights are nonnegative and sum to 1; cells may fall outside the
/// grid (the partition builder drops those, losing their mass).
fn multilinear_weights<const D: usize>(p: [f64; D]) -> Vec<([i64; D], f64)> {
    let (base, frac) = kernel_base(p);
    let mut out = Vec::with_capacity(1 << D);
    for corner in 0..(1usize << D) {
        let mut cell = base;
        let mut w = 1.0f64;
        for k in 0..D {
            if corner >> k & 1 == 1 {
                cell[k] += 1;
                w *= frac[k];
            } else {
                w *= 1.0 - frac[k];
            }
        }
        out.push((cell, w));
    }
    out
}

/// Bilinear kernel weights of a 2-D particle position: 4 `(cell, weight)`
/// pairs; cells may fall outside the grid.
pub fn bilinear_weights(p: [f64; 2]) -> Vec<([i64; 2], f64)> {
    multilinear_weights(p)
}

/// Trilinear kernel weights of a 3-D particle position: 8 pairs.
pub fn trilinear_weights(p: [f64; 3]) -> Vec<([i64; 3], f64)> {
    multilinear_weights(p)
}

fn build_particle_impl<const D: usize>(flow: &FlowField) -> Result<PartitionRecord> {
    if flow.has_non_finite() {
        return Err(Error::invalid("flow field contains non-finite values"));
    }
    let shape = flow.shape().to_vec();
    let n_pix: usize = shape.iter().product();
    let mut ext = [0usize; D];
    ext.copy_from_slice(&shape);

    let mut buf = DestMajorBuf::with_dest_count(n_pix);
    let mut coords = vec![0usize; D];
    for dest in 0..n_pix {
        coords_of(&shape, dest, &mut coords);
        let v = flow.vector(dest);
        let mut p = [0.0f64; D];
        for k in 0..D {
            p[k] = coords[k] as f64 + 0.5 + v[k];
        }
        for (cell, w) in multilinear_weights(p) {
            if w < MIN_AREA {
                continue;
            }
            let mut src = 0usize;
            let mut in_grid = true;
            for k in 0..D {
                if cell[k] < 0 || cell[k] as usize >= ext[k] {
                    in_grid = false;
                    break;
                }
                src = src * ext[k] + cell[k] as usize;
            }
            // Off-grid kernel mass is dropped (boundary spill).
            if in_grid {
                buf.push(src as u32, w);
            }
        }
        buf.finish_dest();
    }
    PartitionRecord::from_dest_major(&shape, buf, true)
}

/// Builds the particle partition record for a 2-D flow.
pub fn build_particle_partition(flow: &FlowField) -> Result<PartitionRecord> {
    if flow.dims() != 2 {
        return Err(Error::invalid(format!(
            "2-D particle partition requires a 2-D flow, got rank {}",
            flow.dims()
        )));
    }
    build_particle_impl::<2>(flow)
}

/// Builds the particle partition record for a 3-D flow.
pub fn build_particle_partition_3d(flow: &FlowField) -> Result<PartitionRecord> {
    if flow.dims() != 3 {
        return Err(Error::invalid(format!(
            "3-D particle partition requires a 3-D flow, got rank {}",
            flow.dims()
        )));
    }
    build_particle_impl::<3>(flow)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::FlowField;

    #[test]
    fn weights_at_a_cell_center_are_a_point_mass() {
        let ws = bilinear_weights([2.5, 3.5]);
        let mut nonzero = 0;
        for (cell, w) in &ws {
            if *w > 0.0 {
                nonzero += 1;
                assert_eq!(cell, &[2, 3]);
                assert_eq!(*w, 1.0);
            }
        }
        assert_eq!(nonzero, 1);
    }

    #[test]
    fn weights_interpolate_and_sum_to_one() {
        let ws = bilinear_weights([2.75, 3.5]);
        let total: f64 = ws.iter().map(|(_, w)| w).sum();
        assert!((total - 1.0).abs() < 1e-15);
        // Offset 0.25 along axis 0 from the center of (2,3): three fourths
        // stay on row 2, one fourth moves to row 3; axis 1 is centered.
        for (cell, w) in ws {
            let expect = match cell {
                [2, 3] => 0.75,
                [3, 3] => 0.25,
                _ => 0.0,
            };
            assert!((w - expect).abs() < 1e-15, "cell {cell:?} weight {w}");
        }
    }

    #[test]
    fn trilinear_midpoint_splits_eight_ways() {
        let ws = trilinear_weights([1.0, 1.0, 1.0]);
        assert_eq!(ws.len(), 8);
        for (_, w) in ws {
            assert!((w - 0.125).abs() < 1e-15);
        }
    }

    #[test]
    fn identity_flow_yields_the_identity_record() {
        let flow = FlowField::zeros(&[4, 5]).unwrap();
        let rec = build_particle_partition(&flow).unwrap();
        for s in 0..20 {
            let (a, d) = rec.entries(s);
            assert_eq!(d, &[s as u32]);
            assert_eq!(a, &[1.0]);
        }
    }

    #[test]
    fn half_pixel_shift_gives_interior_cells_two_half_entries() {
        let (h, w) = (4usize, 4usize);
        let flow = FlowField::from_fn(&[h, w], |_| vec![0.0, 0.5]).unwrap();
        let rec = build_particle_partition(&flow).unwrap();
        for u0 in 0..h {
            for u1 in 1..w - 1 {
                let (a, d) = rec.entries(u0 * w + u1);
                assert_eq!(d, &[(u0 * w + u1 - 1) as u32, (u0 * w + u1) as u32]);
                assert!((a[0] - 0.5).abs() < 1e-12);
                assert!((a[1] - 0.5).abs() < 1e-12);
            }
        }
    }

    /// Integer shift: interior destinations take their source exactly; the
    /// destination row whose particle leaves the grid is vacated, and no
    /// boundary source is shared.
    #[test]
    fn integer_shift_is_exact_and_vacates_the_exiting_row() {
        let (h, w) = (5usize, 3);
        let flow = FlowField::from_fn(&[h, w], |_| vec![1.0, 0.0]).unwrap();
        let rec = build_particle_partition(&flow).unwrap();
        for u0 in 0..h {
            for u1 in 0..w {
                let (a, d) = rec.entries(u0 * w + u1);
                if u0 == 0 {
                    // Nothing maps into the first source row.
                    assert!(d.is_empty());
                } else {
                    assert_eq!(d, &[((u0 - 1) * w + u1) as u32]);
                    assert_eq!(a, &[1.0]);
                }
            }
        }
    }

    #[test]
    fn all_particles_on_one_point_partition_exactly() {
        // Map every center to (2.5, 2.5), the center of pixel (2,2) on a
        // 6x6 grid: that single cell receives every request with weight 1
        // and rescales them to 1/36 each.
        let d = 6usize;
        let flow = FlowField::from_fn(&[d, d], |c| vec![2.5 - c[0], 2.5 - c[1]]).unwrap();
        let rec = build_particle_partition(&flow).unwrap();
        let hot = 2 * d + 2;
        for s in 0..d * d {
            let (a, dests) = rec.entries(s);
            if s == hot {
                assert_eq!(dests.len(), d * d);
                for &w in a {
                    assert!((w - 1.0 / 36.0).abs() < 1e-15);
                }
                assert!((rec.source_sum(s) - 1.0).abs() < 1e-12);
            } else {
                assert!(dests.is_empty());
            }
        }
    }

    #[test]
    fn source_sums_are_one_or_zero_for_any_flow() {
        let flow = FlowField::from_fn(&[9, 7], |c| {
            vec![1.3 * (0.7 * c[1]).sin(), -2.1 * (0.5 * c[0]).cos()]
        })
        .unwrap();
        let rec = build_particle_partition(&flow).unwrap();
        for s in 0..rec.n_pixels() {
            let sum = rec.source_sum(s);
            assert!(
                sum == 0.0 || (sum - 1.0).abs() < 1e-12,
                "source {s} sums to {sum}"
            );
        }
    }
}
