//! Naive warping baselines: backward interpolation of the noise image.
//!
//! These are the methods the statistical battery is meant to catch. Each
//! destination pixel samples the prior at its displaced center with a
//! standard interpolation kernel and no renormalization, so any non-integer
//! displacement averages i.i.d. values and shrinks the per-pixel variance
//! below 1 — visible to the K-S test — while reusing the same source values
//! across neighboring destinations builds spatial correlation — visible to
//! Moran's I.

use crate::error::{Error, Result};
use crate::tensor::{clamped_base, FlowField, NoiseTensor};

/// Interpolation kernel for [`warp_interpolated`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterpKernel {
    /// Nearest pixel center; permutes/copies values (no averaging).
    Nearest,
    /// Separable linear interpolation of the four surrounding centers.
    Bilinear,
    /// Separable Catmull-Rom interpolation of the sixteen surrounding
    /// centers.
    Bicubic,
}

/// Catmull-Rom weights for the four taps around a sample at fraction `t`
/// past the second tap.
#[inline]
fn catmull_rom(t: f64) -> [f64; 4] {
    let (t2, t3) = (t * t, t * t * t);
    [
        -0.5 * t3 + t2 - 0.5 * t,
        1.5 * t3 - 2.5 * t2 + 1.0,
        -1.5 * t3 + 2.0 * t2 + 0.5 * t,
        0.5 * t3 - 0.5 * t2,
    ]
}

/// Tap index clamped to the valid range (edge extension).
#[inline]
fn tap(base: usize, k: usize, extent: usize) -> usize {
    (base + k).saturating_sub(1).min(extent - 1)
}

/// Warps `noise` by sampling it at each destination's displaced center with
/// the chosen kernel, edge-clamped, without renormalization.
///
/// Preserves the noise distribution only for integer displacements; for
/// fractional flows the output is visibly "not noise" to the statistical
/// tests, which is the point of the baseline.
pub fn warp_interpolated(
    noise: &NoiseTensor,
    flow: &FlowField,
    kernel: InterpKernel,
) -> Result<NoiseTensor> {
    if noise.dims() != 2 {
        return Err(Error::invalid("interpolated warp supports 2-D images"));
    }
    if noise.shape() != flow.shape() {
        return Err(Error::invalid(format!(
            "noise shape {:?} does not match flow shape {:?}",
            noise.shape(),
            flow.shape()
        )));
    }
    if flow.has_non_finite() {
        return Err(Error::invalid("flow field contains non-finite components"));
    }
    let (d0, d1) = (noise.shape()[0], noise.shape()[1]);
    let channels = noise.channels();
    let mut out = NoiseTensor::zeros(noise.shape(), channels)?;
    let dst = out.data_mut();
    for i0 in 0..d0 {
        for i1 in 0..d1 {
            let dest = i0 * d1 + i1;
            let v = flow.vector(dest);
            let p = [i0 as f64 + 0.5 + v[0], i1 as f64 + 0.5 + v[1]];
            match kernel {
                InterpKernel::Nearest => {
                    let n0 = (p[0].floor() as i64).clamp(0, d0 as i64 - 1) as usize;
                    let n1 = (p[1].floor() as i64).clamp(0, d1 as i64 - 1) as usize;
                    let src = n0 * d1 + n1;
                    for ch in 0..channels {
                        dst[dest * channels + ch] = noise.at(src, ch);
                    }
                }
                InterpKernel::Bilinear => {
                    let (b0, f0) = clamped_base(p[0], d0);
                    let (b1, f1) = clamped_base(p[1], d1);
                    let (n0, n1) = ((b0 + 1).min(d0 - 1), (b1 + 1).min(d1 - 1));
                    for ch in 0..channels {
                        let at = |a: usize, b: usize| noise.at(a * d1 + b, ch);
                        let top = at(b0, b1) * (1.0 - f1) + at(b0, n1) * f1;
                        let bot = at(n0, b1) * (1.0 - f1) + at(n0, n1) * f1;
                        dst[dest * channels + ch] = top * (1.0 - f0) + bot * f0;
                    }
                }
                InterpKernel::Bicubic => {
                    let (b0, f0) = clamped_base(p[0], d0);
                    let (b1, f1) = clamped_base(p[1], d1);
                    let (w0, w1) = (catmull_rom(f0), catmull_rom(f1));
                    for ch in 0..channels {
                        let mut acc = 0.0f64;
                        for (k0, &a0) in w0.iter().enumerate() {
                            let r = tap(b0, k0, d0) * d1;
                            let mut row = 0.0f64;
                            for (k1, &a1) in w1.iter().enumerate() {
                                row += noise.at(r + tap(b1, k1, d1), ch) * a1;
                            }
                            acc += row * a0;
                        }
                        dst[dest * channels + ch] = acc;
                    }
                }
            }
        }
    }
    Ok(out)
}
