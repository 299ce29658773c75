//! The partition record: the bridge schedule that drives a warp.
//!
//! For every *source* pixel (a unit cell of the prior noise grid) the record
//! lists which *destination* pixels' deformed regions overlap it and with
//! what area. Areas are measured as fractions of one source pixel, so a
//! source whose cell is exactly tiled by destination regions carries entries
//! summing to 1. The warp kernel walks each source's entries in destination
//! row-major order, advancing a Brownian bridge by each entry's area.

use crate::error::{Error, Result};

/// Contributions below this area are dropped during construction: they carry
/// no observable noise mass but would bloat the schedule.
pub const MIN_AREA: f64 = 1e-12;

/// Per-source lists of `(area, destination)` entries, stored compressed
/// (offsets into flat arrays), entries ordered by destination index.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionRecord {
    shape: Vec<usize>,
    offsets: Vec<u32>,
    areas: Vec<f64>,
    dests: Vec<u32>,
}

/// Destination-major staging buffer filled by the partition builders, which
/// naturally iterate destinations. [`PartitionRecord::from_dest_major`]
/// transposes it into the source-major record.
#[derive(Debug, Default)]
pub struct DestMajorBuf {
    /// `offsets[d+1]` is the end of destination `d`'s run in the flat arrays.
    offsets: Vec<u32>,
    srcs: Vec<u32>,
    weights: Vec<f64>,
}

impl DestMajorBuf {
    pub fn with_dest_count(n_dest: usize) -> Self {
        let mut offsets = Vec::with_capacity(n_dest + 1);
        offsets.push(0);
        DestMajorBuf {
            offsets,
            srcs: Vec::new(),
            weights: Vec::new(),
        }
    }

    /// Adds one `(source, weight)` contribution for the current destination.
    #[inline]
    pub fn push(&mut self, src: u32, weight: f64) {
        self.srcs.push(src);
        self.weights.push(weight);
    }

    /// Closes the current destination; must be called exactly once per
    /// destination, in destination index order.
    #[inline]
    pub fn finish_dest(&mut self) {
        self.offsets.push(self.srcs.len() as u32);
    }
}

impl PartitionRecord {
    /// Transposes destination-major contributions into the source-major
    /// record. Iterating destinations in ascending order during placement
    /// makes each source's entries destination-sorted by construction.
    ///
    /// With `normalize_sources`, each nonempty source list is rescaled to
    /// sum to exactly 1 (the particle builder's partition-of-unity rule).
    pub fn from_dest_major(
        shape: &[usize],
        buf: DestMajorBuf,
        normalize_sources: bool,
    ) -> Result<Self> {
        let n_pix: usize = shape.iter().product();
        if buf.offsets.len() != n_pix + 1 {
            return Err(Error::Internal(format!(
                "partition staging closed {} destinations, expected {}",
                buf.offsets.len() - 1,
                n_pix
            )));
        }
        let n_entries = buf.srcs.len();

        let mut counts = vec![0u32; n_pix + 1];
        for &s in &buf.srcs {
            if s as usize >= n_pix {
                return Err(Error::Internal(format!(
                    "source index {s} out of range for shape {shape:?}"
                )));
            }
            counts[s as usize + 1] += 1;
        }
        for i in 0..n_pix {
            counts[i + 1] += counts[i];
        }
        let offsets = counts.clone();

        let mut areas = vec![0.0f64; n_entries];
        let mut dests = vec![0u32; n_entries];
        let mut cursor = counts;
        for d in 0..n_pix {
            let (lo, hi) = (buf.offsets[d] as usize, buf.offsets[d + 1] as usize);
            for e in lo..hi {
                let s = buf.srcs[e] as usize;
                let slot = cursor[s] as usize;
                cursor[s] += 1;
                areas[slot] = buf.weights[e];
                dests[slot] = d as u32;
            }
        }

        let mut rec = PartitionRecord {
            shape: shape.to_vec(),
            offsets,
            areas,
            dests,
        };
        if normalize_sources {
            rec.normalize_source_sums();
        }
        rec.validate()?;
        Ok(rec)
    }

    fn normalize_source_sums(&mut self) {
        for s in 0..self.n_pixels() {
            let (lo, hi) = (self.offsets[s] as usize, self.offsets[s + 1] as usize);
            if lo == hi {
                continue;
            }
            let sum: f64 = self.areas[lo..hi].iter().sum();
            let inv = 1.0 / sum;
            for a in &mut self.areas[lo..hi] {
                *a *= inv;
            }
        }
    }

    /// Structural invariants: positive finite areas, in-range destinations,
    /// strictly ascending destination order within each source.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_pixels() as u32;
        for s in 0..self.n_pixels() {
            let (lo, hi) = (self.offsets[s] as usize, self.offsets[s + 1] as usize);
            let mut prev: Option<u32> = None;
            for e in lo..hi {
                let a = self.areas[e];
                if !a.is_finite() || a <= 0.0 {
                    return Err(Error::Internal(format!(
                        "non-positive area {a} in source {s}"
                    )));
                }
                let d = self.dests[e];
                if d >= n {
                    return Err(Error::Internal(format!(
                        "destination {d} out of range in source {s}"
                    )));
                }
                if let Some(p) = prev {
                    if d <= p {
                        return Err(Error::Internal(format!(
                            "destinations out of order in source {s}: {p} then {d}"
                        )));
                    }
                }
                prev = Some(d);
            }
        }
        Ok(())
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn n_pixels(&self) -> usize {
        self.offsets.len() - 1
    }

    #[inline]
    pub fn n_entries(&self) -> usize {
        self.areas.len()
    }

    /// `(areas, destinations)` of one source's schedule.
    #[inline]
    pub fn entries(&self, src: usize) -> (&[f64], &[u32]) {
        let (lo, hi) = (self.offsets[src] as usize, self.offsets[src + 1] as usize);
        (&self.areas[lo..hi], &self.dests[lo..hi])
    }

    /// Sum of entry areas for one source (the bridge time it will consume,
    /// before any clamping).
    pub fn source_sum(&self, src: usize) -> f64 {
        self.entries(src).0.iter().sum()
    }

    /// Approximate heap footprint, for instrumentation.
    pub fn heap_bytes(&self) -> usize {
        self.offsets.len() * 4 + self.areas.len() * 8 + self.dests.len() * 4
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stage(n_dest: usize, per_dest: &[&[(u32, f64)]]) -> DestMajorBuf {
        let mut buf = DestMajorBuf::with_dest_count(n_dest);
        for list in per_dest {
            for &(s, w) in *list {
                buf.push(s, w);
            }
            buf.finish_dest();
        }
        buf
    }

    #[test]
    fn transpose_orders_entries_by_destination() {
        // 2x2 grid; destination 0 touches sources 0 and 1, destination 3
        // touches sources 1 and 2.
        let buf = stage(
            4,
            &[&[(0, 0.5), (1, 0.25)], &[], &[], &[(1, 0.5), (2, 1.0)]],
        );
        let rec = PartitionRecord::from_dest_major(&[2, 2], buf, false).unwrap();
        assert_eq!(rec.n_entries(), 4);
        let (a, d) = rec.entries(1);
        assert_eq!(d, &[0, 3]);
        assert_eq!(a, &[0.25, 0.5]);
        assert_eq!(rec.entries(3), (&[][..], &[][..]));
    }

    #[test]
    fn normalization_makes_source_sums_exactly_one() {
        let buf = stage(4, &[&[(0, 0.3)], &[(0, 0.5)], &[(2, 0.2)], &[]]);
        let rec = PartitionRecord::from_dest_major(&[2, 2], buf, true).unwrap();
        assert!((rec.source_sum(0) - 1.0).abs() < 1e-12);
        assert!((rec.source_sum(2) - 1.0).abs() < 1e-12);
        assert_eq!(rec.source_sum(1), 0.0);
    }

    #[test]
    fn mismatched_destination_count_is_an_internal_error() {
        let buf = stage(3, &[&[], &[], &[]]);
        assert!(matches!(
            PartitionRecord::from_dest_major(&[2, 2], buf, false),
            Err(Error::Internal(_))
        ));
    }
}
