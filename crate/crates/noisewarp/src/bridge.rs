//! Brownian-bridge sampling on the unit time interval.
//!
//! A noise pixel of value `c` is modeled as the endpoint of a Brownian
//! bridge `B` on `[0, 1]` with `B(0) = 0` and `B(1) = c`: partial time
//! intervals of the bridge carry fractions of the pixel's noise, and when
//! the pixel value is itself standard normal, disjoint increments are
//! independent normals with variance equal to their duration.
//!
//! Conditioned on `B(t) = q`, the value at a later time `t'` is
//!
//! ```text
//! B(t') ~ N( ((1 - t')/(1 - t)) q  +  ((t' - t)/(1 - t)) c,
//!            (t' - t) (1 - t') / (1 - t) )
//! ```
//!
//! which [`bridge_step`] samples with one keyed draw. At `t' = 1` the
//! variance vanishes and the value is pinned to `c` exactly (bitwise), which
//! the warp kernel's exactness guarantees rely on.

use crate::error::{Error, Result};
use crate::rng::{standard_normal, RngKey, RngLane};

/// Times closer to 1 than this are treated as terminal: the remaining
/// denominator `1 - t` is numerically meaningless below it.
pub const TERMINAL_EPS: f64 = 1e-12;

/// Slack tolerated on requested end times before they count as invalid
/// (accumulated rounding, not a caller bug).
const TIME_SLACK: f64 = 1e-9;

/// A bridge mid-flight: pinned endpoint, current time, current value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BridgeState {
    /// The pixel value the bridge is pinned to at time 1.
    pub endpoint: f64,
    pub time: f64,
    pub value: f64,
}

impl BridgeState {
    /// Fresh bridge at time 0, value 0, pinned to `endpoint`.
    #[inline]
    pub fn start(endpoint: f64) -> Self {
        BridgeState {
            endpoint,
            time: 0.0,
            value: 0.0,
        }
    }
}

/// Core conditional step, without argument validation. `dt` must be
/// nonnegative and `state.time + dt` must not meaningfully exceed 1.
#[inline]
pub(crate) fn step_unchecked(state: &BridgeState, dt: f64, key: &RngKey) -> BridgeState {
    if dt == 0.0 {
        return *state;
    }
    let t2 = state.time + dt;
    if t2 >= 1.0 - TERMINAL_EPS {
        // Terminal: variance is zero (or numerically indistinguishable from
        // it); pin to the endpoint without consuming randomness.
        return BridgeState {
            endpoint: state.endpoint,
            time: 1.0,
            value: state.endpoint,
        };
    }
    let denom = 1.0 - state.time;
    let keep = (1.0 - t2) / denom;
    let mean = state.value * keep + state.endpoint * (dt / denom);
    let var = dt * (1.0 - t2) / denom;
    BridgeState {
        endpoint: state.endpoint,
        time: t2,
        value: mean + var.sqrt() * standard_normal(key),
    }
}

/// Advances a bridge by `dt`, drawing at most one keyed normal.
///
/// Zero-duration steps return the state unchanged. Steps ending at time 1
/// return the endpoint deterministically.
pub fn bridge_step(state: &BridgeState, dt: f64, key: &RngKey) -> Result<BridgeState> {
    if !dt.is_finite() || dt < 0.0 {
        return Err(Error::invalid(format!("bridge step duration {dt}")));
    }
    if !(0.0..=1.0).contains(&state.time) {
        return Err(Error::invalid(format!(
            "bridge state time {} outside [0, 1]",
            state.time
        )));
    }
    if state.time + dt > 1.0 + TIME_SLACK {
        return Err(Error::invalid(format!(
            "bridge step to time {} exceeds 1",
            state.time + dt
        )));
    }
    Ok(step_unchecked(state, dt, key))
}

/// Samples the `N x N` refinement of a single noise pixel of value `c`:
///
/// ```text
/// X_k = c / N^2 + (Z_k - S / N^2) / N,   Z_k iid N(0,1),  S = sum Z_k
/// ```
///
/// The `N^2` subpixels sum to `c` up to rounding, are exchangeable, and
/// jointly distributed as the increments of a bridge to `c` over `N^2`
/// equal time slices. Draw `k` uses the lane's draw counter `k`.
pub fn sample_upsampled_subimage(c: f64, n: u32, lane: &RngLane) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("upsampling factor must be at least 1"));
    }
    if !c.is_finite() {
        return Err(Error::invalid(format!("pixel value {c}")));
    }
    let mut z = vec![0.0; (n as usize) * (n as usize)];
    fill_upsampled_subimage(c, n, lane, &mut z);
    Ok(z)
}

/// [`sample_upsampled_subimage`] into a caller-owned buffer of length `n*n`
/// (no validation; hot-loop form).
pub(crate) fn fill_upsampled_subimage(c: f64, n: u32, lane: &RngLane, z: &mut [f64]) {
    debug_assert_eq!(z.len(), (n as usize) * (n as usize));
    for (k, slot) in z.iter_mut().enumerate() {
        *slot = standard_normal(&lane.draw(k as u32));
    }
    let s: f64 = z.iter().sum();
    let inv_nn = 1.0 / z.len() as f64;
    let inv_n = 1.0 / n as f64;
    let base = c * inv_nn;
    let mean_z = s * inv_nn;
    for x in z {
        *x = base + (*x - mean_z) * inv_n;
    }
}

/// Values of a bridge to `c` at the given times.
///
/// `times` must be nondecreasing within `[0, 1]`. One draw counter is
/// consumed per step, so the path at a time prefix is unaffected by later
/// times in the request.
pub fn bridge_prefix_path(c: f64, times: &[f64], lane: &RngLane) -> Result<Vec<f64>> {
    let mut prev = 0.0f64;
    for (i, &t) in times.iter().enumerate() {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::invalid(format!("path time {t} outside [0, 1]")));
        }
        if t < prev {
            return Err(Error::invalid(format!(
                "path times must be nondecreasing, got {t} after {prev} at index {i}"
            )));
        }
        prev = t;
    }
    let mut state = BridgeState::start(c);
    let mut out = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        state = step_unchecked(&state, t - state.time, &lane.draw(k as u32));
        out.push(state.value);
    }
    Ok(out)
}
