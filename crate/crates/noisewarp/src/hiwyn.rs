//! Finite-resolution upsampling reference warp ("hiwyn"), in gather and
//! scatter forms.
//!
//! The reference method refines every prior pixel into an `N x N` subimage
//! that sums to the pixel value (see
//! [`sample_upsampled_subimage`](crate::bridge::sample_upsampled_subimage)),
//! assembles the blocks into an upsampled image, and integrates it over the
//! deformed pixel regions: each destination octagon collects the subpixels
//! whose centers it covers and is normalized by `sqrt(count / N^2)` to
//! restore unit variance. Every subpixel feeds at most one destination;
//! multiply-covered centers go to the lowest destination index.
//!
//! The scatter ("Eulerian") form never materializes the upsampled image: per
//! source pixel it walks the subimage's prefix sums and hands each
//! destination a prefix difference sized by its subpixel count. Because the
//! subpixels of a block are exchangeable, the two forms produce identically
//! distributed output (not identical samples).
//!
//! Cost grows with `N^2`; the bridge-based warp in [`crate::warp`] is the
//! `N -> infinity` limit of this method at finite cost.

use crate::bridge::fill_upsampled_subimage;
use crate::error::{Error, Result};
use crate::geom::{bounding_box, point_in_polygon};
use crate::grid::warp_square_to_octagon;
use crate::record::{DestMajorBuf, PartitionRecord};
use crate::rng::{derive_seed, standard_normal, stream, RngKey, RngLane};
use crate::tensor::{FlowField, NoiseTensor};
use crate::warp::WarpOutput;
use std::collections::BTreeMap;

/// A horizontal span of subpixels gathered by one destination: `len`
/// subpixels starting at column `start` of subpixel row `row`.
#[derive(Debug, Clone, Copy)]
struct GatherRun {
    row: u32,
    start: u32,
    len: u32,
}

/// Precomputed geometry of an upsampled warp: which subpixels each
/// destination gathers, and how many subpixels of each source block each
/// destination covers. Depends only on the flow and `N`, so repeated warps
/// (convergence studies) build it once.
#[derive(Debug)]
pub struct HiwynPlan {
    shape: Vec<usize>,
    n: u32,
    /// Gather spans, destination-major; `run_offsets` is the CSR index.
    runs: Vec<GatherRun>,
    run_offsets: Vec<usize>,
    /// Subpixels claimed per destination.
    dest_counts: Vec<u32>,
    /// `Some(src)` when the destination claims exactly the complete block of
    /// source `src`. Such destinations read the pixel value directly (the
    /// block sums to it by construction), keeping full-coverage warps bitwise
    /// exact in floating point.
    full_block: Vec<Option<u32>>,
    /// Per source block, the destinations it feeds and the subpixel count
    /// for each (counts stored as exact floats).
    overlaps: PartitionRecord,
}

/// One-bit-per-subpixel claim mask.
struct ClaimMask(Vec<u64>);

impl ClaimMask {
    fn new(bits: usize) -> Self {
        ClaimMask(vec![0; bits.div_ceil(64)])
    }

    #[inline]
    fn test(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 != 0
    }

    #[inline]
    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }
}

impl HiwynPlan {
    /// Builds the subpixel assignment for `flow` at upsampling factor `n`.
    pub fn new(flow: &FlowField, n: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("upsampling factor must be at least 1"));
        }
        if flow.dims() != 2 {
            return Err(Error::invalid(format!(
                "upsampled warp supports 2-D flows, got {}-D",
                flow.dims()
            )));
        }
        if flow.has_non_finite() {
            return Err(Error::invalid("flow field contains non-finite components"));
        }
        let shape = flow.shape().to_vec();
        let (d0, d1) = (shape[0], shape[1]);
        let (s0, s1) = (
            d0.checked_mul(n as usize)
                .filter(|&s| s <= u32::MAX as usize),
            d1.checked_mul(n as usize)
                .filter(|&s| s <= u32::MAX as usize),
        );
        let (s0, s1) = match (s0, s1) {
            (Some(a), Some(b)) if a.checked_mul(b).is_some() => (a, b),
            _ => {
                return Err(Error::invalid(format!(
                    "upsampled grid {d0}x{d1} at factor {n} overflows"
                )))
            }
        };
        let n_pixels = d0 * d1;
        let nf = n as f64;
        let nn = (n as u64) * (n as u64);

        let mut claimed = ClaimMask::new(s0 * s1);
        let mut runs = Vec::new();
        let mut run_offsets = Vec::with_capacity(n_pixels + 1);
        run_offsets.push(0usize);
        let mut dest_counts = vec![0u32; n_pixels];
        let mut full_block = vec![None; n_pixels];
        let mut buf = DestMajorBuf::with_dest_count(n_pixels);
        let mut per_src: BTreeMap<u32, u32> = BTreeMap::new();

        for dest in 0..n_pixels {
            let (i0, i1) = (dest / d1, dest % d1);
            let octagon = warp_square_to_octagon(flow, i0, i1);
            let (lo, hi) = bounding_box(&octagon);
            // Subpixel centers sit at (g + 0.5) / n; pad the candidate range
            // by one so boundary centers are decided by the coverage test,
            // not the range arithmetic.
            let g0_lo = ((lo[0] * nf - 0.5).floor() as i64 - 1).max(0);
            let g0_hi = ((hi[0] * nf - 0.5).ceil() as i64 + 1).min(s0 as i64 - 1);
            let g1_lo = ((lo[1] * nf - 0.5).floor() as i64 - 1).max(0);
            let g1_hi = ((hi[1] * nf - 0.5).ceil() as i64 + 1).min(s1 as i64 - 1);
            let mut count = 0u32;
            per_src.clear();
            for g0 in g0_lo..=g0_hi {
                let c0 = (g0 as f64 + 0.5) / nf;
                let row_base = g0 as usize * s1;
                let mut open: Option<GatherRun> = None;
                for g1 in g1_lo..=g1_hi {
                    let idx = row_base + g1 as usize;
                    let covered = !claimed.test(idx)
                        && point_in_polygon(&octagon, [c0, (g1 as f64 + 0.5) / nf]);
                    if covered {
                        claimed.set(idx);
                        count += 1;
                        *per_src
                            .entry(((g0 as usize / n as usize) * d1 + g1 as usize / n as usize)
                                as u32)
                            .or_insert(0) += 1;
                        match &mut open {
                            Some(run) if run.start + run.len == g1 as u32 => run.len += 1,
                            _ => {
                                if let Some(run) = open.take() {
                                    runs.push(run);
                                }
                                open = Some(GatherRun {
                                    row: g0 as u32,
                                    start: g1 as u32,
                                    len: 1,
                                });
                            }
                        }
                    } else if let Some(run) = open.take() {
                        runs.push(run);
                    }
                }
                if let Some(run) = open.take() {
                    runs.push(run);
                }
            }
            run_offsets.push(runs.len());
            dest_counts[dest] = count;
            if count as u64 == nn && per_src.len() == 1 {
                full_block[dest] = per_src.keys().next().copied();
            }
            for (&src, &cnt) in per_src.iter() {
                buf.push(src, cnt as f64);
            }
            buf.finish_dest();
        }

        let overlaps = PartitionRecord::from_dest_major(&shape, buf, false)?;
        Ok(HiwynPlan {
            shape,
            n,
            runs,
            run_offsets,
            dest_counts,
            full_block,
            overlaps,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn upsample(&self) -> u32 {
        self.n
    }

    /// Subpixels claimed by each destination.
    pub fn dest_counts(&self) -> &[u32] {
        &self.dest_counts
    }

    /// Per source block: destinations fed and subpixel count per destination.
    pub fn overlaps(&self) -> &PartitionRecord {
        &self.overlaps
    }

    fn subpixels_per_block(&self) -> usize {
        (self.n as usize) * (self.n as usize)
    }

    /// Delivered area fraction and vacated set implied by the counts.
    fn coverage(&self) -> (Vec<f64>, Vec<usize>) {
        let nn = self.subpixels_per_block() as f64;
        let delivered: Vec<f64> = self.dest_counts.iter().map(|&c| c as f64 / nn).collect();
        let vacated = self
            .dest_counts
            .iter()
            .enumerate()
            .filter_map(|(d, &c)| (c == 0).then_some(d))
            .collect();
        (delivered, vacated)
    }
}

fn check_prior(prior: &NoiseTensor, plan: &HiwynPlan) -> Result<()> {
    if prior.shape() != plan.shape() {
        return Err(Error::invalid(format!(
            "prior shape {:?} does not match plan shape {:?}",
            prior.shape(),
            plan.shape()
        )));
    }
    Ok(())
}

/// Gather-form upsampled warp using a prebuilt plan.
///
/// Materializes the upsampled image one channel at a time, then sums each
/// destination's claimed subpixels in row-major order. A destination that
/// claims a complete source block takes the block's pixel value directly —
/// the sum identity the subimage has by construction — so full-coverage
/// warps (identity, integer shifts) are bitwise exact despite floating-point
/// rounding in the fold.
pub fn hiwyn_warp_with_plan(
    prior: &NoiseTensor,
    plan: &HiwynPlan,
    seed: u64,
) -> Result<WarpOutput> {
    check_prior(prior, plan)?;
    let n = plan.n as usize;
    let nn = plan.subpixels_per_block();
    let (d0, d1) = (plan.shape[0], plan.shape[1]);
    let (s0, s1) = (d0 * n, d1 * n);
    let channels = prior.channels();
    let sub_seed = derive_seed(seed, stream::SUBPIXEL);
    let vacated_seed = derive_seed(seed, stream::VACATED);

    let (delivered_area, vacated) = plan.coverage();
    let mut warped = NoiseTensor::zeros(&plan.shape, channels)?;
    let mut image = vec![0.0f64; s0 * s1];
    let mut block = vec![0.0f64; nn];
    for ch in 0..channels {
        for src in 0..d0 * d1 {
            let c = prior.at(src, ch);
            let lane = RngLane::new(sub_seed, src as u64, ch as u32);
            fill_upsampled_subimage(c, plan.n, &lane, &mut block);
            let (i0, i1) = (src / d1, src % d1);
            for r in 0..n {
                let dst = (i0 * n + r) * s1 + i1 * n;
                image[dst..dst + n].copy_from_slice(&block[r * n..(r + 1) * n]);
            }
        }
        let out = warped.data_mut();
        for dest in 0..d0 * d1 {
            let count = plan.dest_counts[dest];
            out[dest * channels + ch] = if count == 0 {
                standard_normal(&RngKey::new(vacated_seed, dest as u64, ch as u32, 0))
            } else if let Some(src) = plan.full_block[dest] {
                prior.at(src as usize, ch)
            } else {
                let mut acc = 0.0f64;
                for run in &plan.runs[plan.run_offsets[dest]..plan.run_offsets[dest + 1]] {
                    let at = run.row as usize * s1 + run.start as usize;
                    for &x in &image[at..at + run.len as usize] {
                        acc += x;
                    }
                }
                acc / (count as f64 / nn as f64).sqrt()
            };
        }
    }
    Ok(WarpOutput {
        warped,
        delivered_area,
        vacated,
        clamp_truncations: 0,
        truncated_area: 0.0,
    })
}

/// Scatter-form upsampled warp using a prebuilt plan.
///
/// Per source block, walks the subimage's prefix sums and hands each covered
/// destination one prefix difference, sized by its subpixel count; the final
/// prefix is pinned to the pixel value (the sum identity). No upsampled
/// image is materialized.
pub fn hiwyn_warp_eulerian_with_plan(
    prior: &NoiseTensor,
    plan: &HiwynPlan,
    seed: u64,
) -> Result<WarpOutput> {
    check_prior(prior, plan)?;
    let nn = plan.subpixels_per_block();
    let n_pixels = prior.n_pixels();
    let channels = prior.channels();
    let scatter_seed = derive_seed(seed, stream::SUBPIXEL_SCATTER);
    let vacated_seed = derive_seed(seed, stream::VACATED);

    let mut acc = vec![0.0f64; n_pixels * channels];
    let mut block = vec![0.0f64; nn];
    for src in 0..n_pixels {
        let (counts, dests) = plan.overlaps.entries(src);
        if dests.is_empty() {
            continue;
        }
        for ch in 0..channels {
            let c = prior.at(src, ch);
            let lane = RngLane::new(scatter_seed, src as u64, ch as u32);
            fill_upsampled_subimage(c, plan.n, &lane, &mut block);
            let mut prefix = 0.0f64;
            let mut k = 0usize;
            let mut prev = 0.0f64;
            for (i, &dest) in dests.iter().enumerate() {
                let k_end = k + counts[i] as usize;
                while k < k_end {
                    prefix += block[k];
                    k += 1;
                }
                // Exhausting the block delivers the pixel value exactly.
                let here = if k == nn { c } else { prefix };
                acc[dest as usize * channels + ch] += here - prev;
                prev = here;
            }
        }
    }

    let (delivered_area, vacated) = plan.coverage();
    let mut warped = NoiseTensor::zeros(&plan.shape, channels)?;
    let out = warped.data_mut();
    for dest in 0..n_pixels {
        let count = plan.dest_counts[dest];
        for ch in 0..channels {
            out[dest * channels + ch] = if count == 0 {
                standard_normal(&RngKey::new(vacated_seed, dest as u64, ch as u32, 0))
            } else {
                acc[dest * channels + ch] / (count as f64 / nn as f64).sqrt()
            };
        }
    }
    Ok(WarpOutput {
        warped,
        delivered_area,
        vacated,
        clamp_truncations: 0,
        truncated_area: 0.0,
    })
}

/// Gather-form upsampled warp of `prior` along `flow` at factor `n`.
pub fn hiwyn_warp(prior: &NoiseTensor, flow: &FlowField, n: u32, seed: u64) -> Result<WarpOutput> {
    let plan = HiwynPlan::new(flow, n)?;
    hiwyn_warp_with_plan(prior, &plan, seed)
}

/// Scatter-form upsampled warp of `prior` along `flow` at factor `n`.
pub fn hiwyn_warp_eulerian(
    prior: &NoiseTensor,
    flow: &FlowField,
    n: u32,
    seed: u64,
) -> Result<WarpOutput> {
    let plan = HiwynPlan::new(flow, n)?;
    hiwyn_warp_eulerian_with_plan(prior, &plan, seed)
}
