//! Distribution-preserving noise transport along a partition record.
//!
//! Each source pixel's value is treated as the endpoint of a Brownian bridge
//! (see [`crate::bridge`]). The areas that pixel contributes to destination
//! pixels are consumed as time slices of the bridge, in destination order,
//! and the corresponding increments are scattered to the destinations. A
//! destination then holds a sum of independent zero-mean normals whose total
//! variance equals its accumulated area, so dividing by the square root of
//! that area yields a field that is again i.i.d. standard normal — exactly,
//! at any resolution, for any finite deformation.
//!
//! When a source is oversubscribed (requested slices exceeding the unit
//! interval, possible under extreme folding flows), the excess is truncated:
//! late requests are shortened or dropped, and the destination normalization
//! uses the area actually delivered, preserving unit variance regardless.

use crate::bridge::{step_unchecked, BridgeState, TERMINAL_EPS};
use crate::error::{Error, Result};
use crate::grid::build_grid_partition;
use crate::particle::{build_particle_partition, build_particle_partition_3d};
use crate::record::PartitionRecord;
use crate::rng::{derive_seed, standard_normal, stream, RngKey};
use crate::tensor::{FlowField, NoiseTensor};

/// Area overshoot beyond the unit interval tolerated as accumulated rounding
/// (a normalized record's source sums are 1 only up to rounding); anything
/// larger counts as a genuine truncation.
const CLAMP_SLACK: f64 = 1e-9;

/// Which partition builder [`warp_sequence`] and the convenience wrappers use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionMethod {
    /// Deformed-cell polygon overlap areas (2-D only); exact partition for
    /// non-folding flows.
    Grid,
    /// Point-sample multilinear deposit (2-D and 3-D); approximate partition,
    /// normalized per source.
    Particle,
}

/// Builds a partition record for `flow` with the chosen method.
pub fn build_partition(flow: &FlowField, method: PartitionMethod) -> Result<PartitionRecord> {
    match (method, flow.dims()) {
        (PartitionMethod::Grid, 2) => build_grid_partition(flow),
        (PartitionMethod::Grid, d) => Err(Error::invalid(format!(
            "grid partition supports 2-D flows, got {d}-D"
        ))),
        (PartitionMethod::Particle, 2) => build_particle_partition(flow),
        (PartitionMethod::Particle, 3) => build_particle_partition_3d(flow),
        (PartitionMethod::Particle, d) => Err(Error::invalid(format!(
            "particle partition supports 2-D and 3-D flows, got {d}-D"
        ))),
    }
}

/// Result of one warp step.
#[derive(Debug, Clone)]
pub struct WarpOutput {
    /// The transported noise; i.i.d. standard normal whenever the prior is.
    pub warped: NoiseTensor,
    /// Area delivered to each destination (its pre-normalization variance).
    pub delivered_area: Vec<f64>,
    /// Destinations that received no area and were refilled with fresh noise.
    pub vacated: Vec<usize>,
    /// Partition entries shortened or dropped because their source ran out
    /// of bridge time. Zero for any per-source-normalized record.
    pub clamp_truncations: usize,
    /// Total requested area discarded by those truncations.
    pub truncated_area: f64,
}

/// Walks one source's time schedule: writes the per-entry delivered duration
/// and returns `(truncations, truncated_area)` for the source.
///
/// Mirrors the time arithmetic of [`step_unchecked`] so the per-channel value
/// walks see exactly the durations accounted here.
fn source_schedule(areas: &[f64], delivered: &mut [f64]) -> (usize, f64) {
    let mut truncations = 0usize;
    let mut truncated = 0.0f64;
    let mut t = 0.0f64;
    for (k, &a) in areas.iter().enumerate() {
        let dt = if t >= 1.0 - TERMINAL_EPS {
            // Bridge already exhausted: request is dropped entirely.
            truncations += 1;
            truncated += a;
            0.0
        } else {
            let room = 1.0 - t;
            if a > room + CLAMP_SLACK {
                truncations += 1;
                truncated += a - room;
                room
            } else {
                a.min(room)
            }
        };
        delivered[k] = dt;
        t += dt;
        if t >= 1.0 - TERMINAL_EPS {
            t = 1.0;
        }
    }
    (truncations, truncated)
}

/// Transports `prior` along `record`, drawing all randomness from `seed`.
///
/// Bitwise deterministic in `(prior, record, seed)`: draws are keyed by
/// source pixel, channel, and entry index, never by iteration order.
/// An identity record reproduces the prior bitwise.
pub fn warp_noise(prior: &NoiseTensor, record: &PartitionRecord, seed: u64) -> Result<WarpOutput> {
    if prior.shape() != record.shape() {
        return Err(Error::invalid(format!(
            "prior shape {:?} does not match partition shape {:?}",
            prior.shape(),
            record.shape()
        )));
    }
    let n = prior.n_pixels();
    let channels = prior.channels();
    let n_entries = record.n_entries();
    let bridge_seed = derive_seed(seed, stream::BRIDGE);
    let vacated_seed = derive_seed(seed, stream::VACATED);

    // Phase 1: per-source bridge walks. Every write lands in this source's
    // own slice of `inc`/`delivered`, so the phase is order-independent.
    let mut inc = vec![0.0f64; n_entries * channels];
    let mut delivered = vec![0.0f64; n_entries];
    let mut clamp_truncations = 0usize;
    let mut truncated_area = 0.0f64;
    let mut offset = 0usize;
    for src in 0..n {
        let (areas, _) = record.entries(src);
        let m = areas.len();
        if m == 0 {
            continue;
        }
        debug_assert!(m < u32::MAX as usize, "entry count per source overflows draw counter");
        let slice = &mut delivered[offset..offset + m];
        let (truncs, lost) = source_schedule(areas, slice);
        clamp_truncations += truncs;
        truncated_area += lost;
        for ch in 0..channels {
            let mut state = BridgeState::start(prior.at(src, ch));
            for (k, &dt) in delivered[offset..offset + m].iter().enumerate() {
                let key = RngKey::new(bridge_seed, src as u64, ch as u32, k as u32);
                let next = step_unchecked(&state, dt, &key);
                inc[(offset + k) * channels + ch] = next.value - state.value;
                state = next;
            }
        }
        offset += m;
    }

    // Phase 2: sequential scatter in source-major order, so each destination
    // accumulates its contributions in a fixed order regardless of how phase
    // 1 was scheduled.
    let mut acc = vec![0.0f64; n * channels];
    let mut area_acc = vec![0.0f64; n];
    let mut e = 0usize;
    for src in 0..n {
        let (_, dests) = record.entries(src);
        for &d in dests {
            let d = d as usize;
            area_acc[d] += delivered[e];
            let row = &mut acc[d * channels..(d + 1) * channels];
            for (ch, slot) in row.iter_mut().enumerate() {
                *slot += inc[e * channels + ch];
            }
            e += 1;
        }
    }

    // Normalize by delivered area; refill starved destinations with fresh
    // keyed noise so the output stays white everywhere.
    let mut warped = NoiseTensor::zeros(prior.shape(), channels)?;
    let mut vacated = Vec::new();
    {
        let out = warped.data_mut();
        for d in 0..n {
            let a = area_acc[d];
            if a <= 0.0 {
                vacated.push(d);
                for ch in 0..channels {
                    out[d * channels + ch] =
                        standard_normal(&RngKey::new(vacated_seed, d as u64, ch as u32, 0));
                }
            } else {
                let inv = 1.0 / a.sqrt();
                for ch in 0..channels {
                    out[d * channels + ch] = acc[d * channels + ch] * inv;
                }
            }
        }
    }

    Ok(WarpOutput {
        warped,
        delivered_area: area_acc,
        vacated,
        clamp_truncations,
        truncated_area,
    })
}

/// Warps `prior` through a sequence of flows, returning every frame
/// (`frames[0]` is the prior itself).
///
/// Each frame rebuilds its partition from its own flow and draws from a seed
/// derived from the frame index, so a prefix of the sequence is unaffected
/// by how many more flows follow.
pub fn warp_sequence(
    prior: &NoiseTensor,
    flows: &[FlowField],
    method: PartitionMethod,
    seed: u64,
) -> Result<Vec<NoiseTensor>> {
    let seq_seed = derive_seed(seed, stream::FRAME);
    let mut frames = Vec::with_capacity(flows.len() + 1);
    frames.push(prior.clone());
    for (f, flow) in flows.iter().enumerate() {
        if flow.shape() != prior.shape() {
            return Err(Error::invalid(format!(
                "flow {} shape {:?} does not match noise shape {:?}",
                f,
                flow.shape(),
                prior.shape()
            )));
        }
        let record = build_partition(flow, method)?;
        let out = warp_noise(frames.last().expect("frames is non-empty"), &record, derive_seed(seq_seed, f as u64))?;
        frames.push(out.warped);
    }
    Ok(frames)
}
