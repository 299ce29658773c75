//! Dense pixel grids: noise images and deformation (flow) fields.
//!
//! Both types share the same layout conventions:
//!
//! * a pixel with index `(i0, i1, ...)` occupies the axis-aligned unit cell
//!   `[i0, i0+1) x [i1, i1+1) x ...` in continuous grid coordinates, so its
//!   center sits at `(i0 + 0.5, i1 + 0.5, ...)`;
//! * pixels are stored row-major (last axis fastest), with the per-pixel
//!   payload (channels, or flow components) innermost;
//! * values are held as `f64` in memory. File formats store 32-bit floats;
//!   widening on load is exact.

use crate::error::{Error, Result};
use crate::rng::{self, standard_normal, RngKey};

/// Supported grid ranks: images are 2-D, volumes 3-D.
pub const MIN_DIMS: usize = 2;
pub const MAX_DIMS: usize = 3;

/// Checks that `shape` is a supported grid: rank 2 or 3, no empty axis, at
/// most `u32::MAX` pixels (pixel indices are stored as 32-bit).
pub fn validate_shape(shape: &[usize]) -> Result<()> {
    if !(MIN_DIMS..=MAX_DIMS).contains(&shape.len()) {
        return Err(Error::invalid(format!(
            "tensor rank must be 2 or 3, got {}",
            shape.len()
        )));
    }
    if shape.iter().any(|&e| e == 0) {
        return Err(Error::invalid(format!("zero-sized axis in shape {shape:?}")));
    }
    let mut total = 1usize;
    for &e in shape {
        total = total
            .checked_mul(e)
            .ok_or_else(|| Error::invalid(format!("shape {shape:?} overflows")))?;
    }
    if total > u32::MAX as usize {
        return Err(Error::invalid(format!(
            "shape {shape:?} has more than 2^32-1 pixels"
        )));
    }
    Ok(())
}

/// A multi-channel scalar field on a pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTensor {
    shape: Vec<usize>,
    channels: usize,
    data: Vec<f64>,
}

impl NoiseTensor {
    pub fn zeros(shape: &[usize], channels: usize) -> Result<Self> {
        validate_shape(shape)?;
        if channels == 0 {
            return Err(Error::invalid("channel count must be at least 1"));
        }
        let n: usize = shape.iter().product();
        Ok(NoiseTensor {
            shape: shape.to_vec(),
            channels,
            data: vec![0.0; n * channels],
        })
    }

    pub fn from_vec(shape: &[usize], channels: usize, data: Vec<f64>) -> Result<Self> {
        validate_shape(shape)?;
        if channels == 0 {
            return Err(Error::invalid("channel count must be at least 1"));
        }
        let n: usize = shape.iter().product();
        if data.len() != n * channels {
            return Err(Error::invalid(format!(
                "data length {} does not match shape {:?} x {} channels",
                data.len(),
                shape,
                channels
            )));
        }
        Ok(NoiseTensor {
            shape: shape.to_vec(),
            channels,
            data,
        })
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn dims(&self) -> usize {
        self.shape.len()
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn n_pixels(&self) -> usize {
        self.data.len() / self.channels
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Value at linear pixel index `pixel`, channel `ch`.
    #[inline]
    pub fn at(&self, pixel: usize, ch: usize) -> f64 {
        self.data[pixel * self.channels + ch]
    }

    /// All channel values of one pixel.
    #[inline]
    pub fn pixel(&self, pixel: usize) -> &[f64] {
        let c = self.channels;
        &self.data[pixel * c..(pixel + 1) * c]
    }

    /// Single-channel view of the data, rejecting multi-channel tensors.
    pub fn single_channel(&self) -> Result<&[f64]> {
        if self.channels != 1 {
            return Err(Error::invalid(format!(
                "expected a single-channel tensor, got {} channels",
                self.channels
            )));
        }
        Ok(&self.data)
    }
}

/// Row-major linear index of multi-dimensional pixel coordinates.
#[inline]
pub fn linear_index(shape: &[usize], coords: &[usize]) -> usize {
    let mut idx = 0usize;
    for (c, e) in coords.iter().zip(shape) {
        debug_assert!(c < e);
        idx = idx * e + c;
    }
    idx
}

/// Inverse of [`linear_index`].
#[inline]
pub fn coords_of(shape: &[usize], mut idx: usize, out: &mut [usize]) {
    for k in (0..shape.len()).rev() {
        out[k] = idx % shape[k];
        idx /= shape[k];
    }
}

/// Samples an i.i.d. standard-normal white-noise image.
///
/// Every value is addressed by `(seed, pixel, channel)` through the prior
/// stream, so the result is identical for any thread count and any two
/// calls with the same arguments.
pub fn make_prior_noise(shape: &[usize], channels: usize, seed: u64) -> Result<NoiseTensor> {
    let mut out = NoiseTensor::zeros(shape, channels)?;
    let s = rng::derive_seed(seed, rng::stream::PRIOR);
    let c = channels;
    for (pix, chunk) in out.data.chunks_exact_mut(c).enumerate() {
        for (ch, v) in chunk.iter_mut().enumerate() {
            *v = standard_normal(&RngKey::new(s, pix as u64, ch as u32, 0));
        }
    }
    Ok(out)
}

/// A per-pixel displacement field on the same grid conventions as
/// [`NoiseTensor`]. Component `k` of a pixel's vector is the displacement
/// along axis `k`, measured in pixels. The deformation map is
/// `psi(x) = x + flow(x)`, with `flow` stored at pixel centers.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl FlowField {
    pub fn zeros(shape: &[usize]) -> Result<Self> {
        validate_shape(shape)?;
        let n: usize = shape.iter().product();
        Ok(FlowField {
            shape: shape.to_vec(),
            data: vec![0.0; n * shape.len()],
        })
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        validate_shape(shape)?;
        let n: usize = shape.iter().product();
        if data.len() != n * shape.len() {
            return Err(Error::invalid(format!(
                "flow data length {} does not match shape {:?}",
                data.len(),
                shape
            )));
        }
        Ok(FlowField {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Builds a flow by evaluating `f(center) -> displacement` at every pixel.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Result<Self> {
        validate_shape(shape)?;
        let d = shape.len();
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n * d);
        let mut coords = vec![0usize; d];
        let mut center = vec![0.0f64; d];
        for idx in 0..n {
            coords_of(shape, idx, &mut coords);
            for k in 0..d {
                center[k] = coords[k] as f64 + 0.5;
            }
            let v = f(&center);
            assert_eq!(v.len(), d, "flow function must return one value per axis");
            data.extend_from_slice(&v);
        }
        FlowField::from_vec(shape, data)
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn dims(&self) -> usize {
        self.shape.len()
    }

    #[inline]
    pub fn n_pixels(&self) -> usize {
        self.data.len() / self.shape.len()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Displacement vector stored at linear pixel index `pixel`.
    #[inline]
    pub fn vector(&self, pixel: usize) -> &[f64] {
        let d = self.shape.len();
        &self.data[pixel * d..(pixel + 1) * d]
    }

    /// Flips the direction of every displacement vector.
    pub fn negate(&mut self) {
        for v in &mut self.data {
            *v = -*v;
        }
    }

    pub fn has_non_finite(&self) -> bool {
        self.data.iter().any(|v| !v.is_finite())
    }

    /// Bilinear (2-D) sample of the flow at an arbitrary continuous position,
    /// edge-clamped: positions outside the hull of pixel centers take the
    /// value of the nearest edge.
    ///
    /// Interpolation between centers is exact for affine flows, which the
    /// geometric tests rely on.
    pub fn sample_bilinear(&self, p: [f64; 2]) -> [f64; 2] {
        debug_assert_eq!(self.shape.len(), 2);
        let (h, w) = (self.shape[0], self.shape[1]);
        let (b0, f0) = clamped_base(p[0], h);
        let (b1, f1) = clamped_base(p[1], w);
        // Second tap collapses onto the first along a single-pixel axis
        // (its weight is 0 there).
        let (n0, n1) = ((b0 + 1).min(h - 1), (b1 + 1).min(w - 1));
        let at = |i0: usize, i1: usize, k: usize| self.data[(i0 * w + i1) * 2 + k];
        let mut out = [0.0f64; 2];
        for (k, o) in out.iter_mut().enumerate() {
            let top = at(b0, b1, k) * (1.0 - f1) + at(b0, n1, k) * f1;
            let bot = at(n0, b1, k) * (1.0 - f1) + at(n0, n1, k) * f1;
            *o = top * (1.0 - f0) + bot * f0;
        }
        out
    }

    /// Converts a flow to a tensor whose channels are the displacement
    /// components, e.g. for serialization.
    pub fn to_tensor(&self) -> NoiseTensor {
        NoiseTensor {
            shape: self.shape.clone(),
            channels: self.shape.len(),
            data: self.data.clone(),
        }
    }

    /// Interprets a tensor with `channels == rank` as a flow field.
    pub fn from_tensor(t: &NoiseTensor) -> Result<Self> {
        if t.channels() != t.dims() {
            return Err(Error::invalid(format!(
                "a rank-{} flow needs {} channels, tensor has {}",
                t.dims(),
                t.dims(),
                t.channels()
            )));
        }
        FlowField::from_vec(t.shape(), t.data().to_vec())
    }
}

/// Base index and interpolation weight along one axis for center-based
/// linear interpolation with edge clamping.
///
/// For `extent == 1` the single sample is returned with weight 0.
#[inline]
pub(crate) fn clamped_base(p: f64, extent: usize) -> (usize, f64) {
    if extent == 1 {
        return (0, 0.0);
    }
    let s = p - 0.5;
    let b = s.floor();
    if b < 0.0 {
        (0, 0.0)
    } else if b as usize >= extent - 1 {
        (extent - 2, 1.0)
    } else {
        (b as usize, s - b)
    }
}
