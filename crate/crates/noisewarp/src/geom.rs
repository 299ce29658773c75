//! Planar polygon primitives for the grid partition builder: shoelace areas,
//! half-plane clipping (Sutherland-Hodgman), and even-odd point location.
//!
//! Polygons are vertex lists in grid coordinates. Subjects may be non-convex
//! or inverted (degenerate deformations fold the octagons); clipping against
//! a convex cell then yields chains with zero-width bridges whose *signed*
//! shoelace area still equals the covered area, so areas are taken as the
//! absolute value of the signed sum at the end.

pub type Point = [f64; 2];

/// Unsigned polygon area by the shoelace formula.
pub fn polygon_area(pts: &[Point]) -> f64 {
    if pts.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    let mut prev = pts[pts.len() - 1];
    for &p in pts {
        acc += prev[0] * p[1] - p[0] * prev[1];
        prev = p;
    }
    0.5 * acc.abs()
}

/// Clips `pts` to the half-plane `sign * (p[axis] - bound) >= 0`, appending
/// the result to `out` (which is cleared first).
///
/// Axis-aligned specialization of Sutherland-Hodgman: the intersection
/// parameter along an edge is exact where the edge is parallel to the cut,
/// and edges lying in the cut line are kept degenerate (zero area).
fn clip_halfplane(pts: &[Point], axis: usize, bound: f64, sign: f64, out: &mut Vec<Point>) {
    out.clear();
    if pts.is_empty() {
        return;
    }
    let inside = |p: &Point| sign * (p[axis] - bound) >= 0.0;
    let mut s = pts[pts.len() - 1];
    let mut s_in = inside(&s);
    for &e in pts {
        let e_in = inside(&e);
        if s_in != e_in {
            // The edge crosses the cut line; denominator is nonzero because
            // the endpoints lie strictly on opposite sides along `axis`.
            let t = (bound - s[axis]) / (e[axis] - s[axis]);
            let mut x = [
                s[0] + t * (e[0] - s[0]),
                s[1] + t * (e[1] - s[1]),
            ];
            // Pin the cut coordinate exactly onto the line so later clips of
            // adjacent cells see a consistent boundary.
            x[axis] = bound;
            out.push(x);
        }
        if e_in {
            out.push(e);
        }
        s = e;
        s_in = e_in;
    }
}

/// Reusable buffers for repeated clipping without per-call allocation.
#[derive(Default)]
pub struct ClipScratch {
    a: Vec<Point>,
    b: Vec<Point>,
}

impl ClipScratch {
    /// Area of `pts` clipped to the unit cell `[c0, c0+1] x [c1, c1+1]`.
    pub fn cell_area(&mut self, pts: &[Point], c0: f64, c1: f64) -> f64 {
        clip_halfplane(pts, 0, c0, 1.0, &mut self.a);
        clip_halfplane(&self.a, 0, c0 + 1.0, -1.0, &mut self.b);
        clip_halfplane(&self.b, 1, c1, 1.0, &mut self.a);
        clip_halfplane(&self.a, 1, c1 + 1.0, -1.0, &mut self.b);
        polygon_area(&self.b)
    }

    /// Restricts `pts` to the slab `lo <= p[axis] <= hi`, leaving the result
    /// in an internal buffer that the returned slice borrows.
    pub fn slab(&mut self, pts: &[Point], axis: usize, lo: f64, hi: f64) -> &[Point] {
        clip_halfplane(pts, axis, lo, 1.0, &mut self.a);
        clip_halfplane(&self.a, axis, hi, -1.0, &mut self.b);
        &self.b
    }
}

/// Clips a polygon to the unit cell whose minimum corner is `cell_min`,
/// returning the clipped vertex list.
pub fn clip_polygon_to_cell(pts: &[Point], cell_min: [f64; 2]) -> Vec<Point> {
    let mut a = Vec::with_capacity(pts.len() + 4);
    let mut b = Vec::with_capacity(pts.len() + 4);
    clip_halfplane(pts, 0, cell_min[0], 1.0, &mut a);
    clip_halfplane(&a, 0, cell_min[0] + 1.0, -1.0, &mut b);
    clip_halfplane(&b, 1, cell_min[1], 1.0, &mut a);
    clip_halfplane(&a, 1, cell_min[1] + 1.0, -1.0, &mut b);
    b
}

/// Even-odd (crossing number) point-in-polygon test.
///
/// Robust for the degenerate and self-intersecting outlines produced by
/// folded deformations; points exactly on an edge count by the half-open
/// crossing rule, which is consistent for adjacent polygons sharing an edge.
pub fn point_in_polygon(pts: &[Point], p: Point) -> bool {
    let mut inside = false;
    let n = pts.len();
    if n < 3 {
        return false;
    }
    let mut j = n - 1;
    for i in 0..n {
        let (pi, pj) = (pts[i], pts[j]);
        if (pi[1] > p[1]) != (pj[1] > p[1]) {
            let x = pi[0] + (p[1] - pi[1]) / (pj[1] - pi[1]) * (pj[0] - pi[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Axis-aligned bounding box of a vertex list, as `(min, max)` corners.
pub fn bounding_box(pts: &[Point]) -> ([f64; 2], [f64; 2]) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in pts {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (lo, hi)
}
