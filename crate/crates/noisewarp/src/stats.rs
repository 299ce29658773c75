//! Statistical verification battery: marginal normality (one-sample K-S),
//! spatial independence (Moran's I), and distributional distance between
//! warping methods (per-pixel 1-D 2-Wasserstein), plus the convergence
//! experiment comparing the finite-N upsampling warp against the bridge
//! warp it approximates.

use crate::error::{Error, Result};
use crate::grid::build_grid_partition;
use crate::hiwyn::{hiwyn_warp_with_plan, HiwynPlan};
use crate::rng::{derive_seed, stream};
use crate::tensor::{FlowField, NoiseTensor};
use crate::warp::warp_noise;
use rayon::prelude::*;

/// Outcome of one statistical test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatReport {
    /// Which test produced this report.
    pub test: &'static str,
    pub statistic: f64,
    /// Two-sided p-value in `[0, 1]`.
    pub p_value: f64,
    /// Sample size the test ran on.
    pub n: usize,
}

/// Standard normal CDF.
fn phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Tail of the Kolmogorov distribution: `P(sup |B(t)| > lambda)` for a
/// Brownian bridge, via the alternating series truncated once terms drop
/// below 1e-10.
fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda <= 1e-8 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=1000 {
        let term = (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-10 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn require_finite(samples: &[f64]) -> Result<()> {
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("samples contain non-finite values"));
    }
    Ok(())
}

/// One-sample Kolmogorov-Smirnov test of `samples` against N(0, 1).
///
/// The statistic is the sup-distance between the empirical CDF and the
/// standard normal CDF; the p-value uses the asymptotic Kolmogorov
/// distribution at `sqrt(n) * D`.
pub fn ks_test_standard_normal(samples: &[f64]) -> Result<StatReport> {
    let n = samples.len();
    if n < 10 {
        return Err(Error::invalid(format!(
            "K-S test needs at least 10 samples, got {n}"
        )));
    }
    require_finite(samples)?;
    let mut sorted = samples.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let nf = n as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = phi(x);
        let above = (i + 1) as f64 / nf - f;
        let below = f - i as f64 / nf;
        d = d.max(above).max(below);
    }
    Ok(StatReport {
        test: "ks-standard-normal",
        statistic: d,
        p_value: kolmogorov_tail(nf.sqrt() * d),
        n,
    })
}

/// Sums of rook-adjacency weight moments for a `d0 x d1` grid with binary
/// symmetric weights: total weight `W`, and the `S1`, `S2` sums of the
/// normality-variance formula.
fn rook_moments(d0: usize, d1: usize) -> (f64, f64, f64) {
    let edges = d0 * (d1 - 1) + (d0 - 1) * d1;
    let w = 2.0 * edges as f64;
    // Every adjacent ordered pair has w_ij + w_ji = 2, so S1 = 2W.
    let s1 = 2.0 * w;
    // S2 = sum over pixels of (in-degree + out-degree)^2 = 4 * sum(deg^2).
    let mut sum_deg_sq = 0usize;
    for i in 0..d0 {
        for j in 0..d1 {
            let deg = usize::from(i > 0)
                + usize::from(i + 1 < d0)
                + usize::from(j > 0)
                + usize::from(j + 1 < d1);
            sum_deg_sq += deg * deg;
        }
    }
    (w, s1, 4.0 * sum_deg_sq as f64)
}

/// Moran's I spatial autocorrelation of a single-channel 2-D image under
/// rook (4-neighbor) binary weights, with the two-sided p-value from the
/// normality approximation.
///
/// White noise scores near the null expectation `-1/(n-1)`; smoothed or
/// interpolated noise scores positive with vanishing p-value.
pub fn morans_i(image: &NoiseTensor) -> Result<StatReport> {
    if image.dims() != 2 {
        return Err(Error::invalid("Moran's I expects a 2-D image"));
    }
    let values = image.single_channel()?;
    let (d0, d1) = (image.shape()[0], image.shape()[1]);
    if d0 < 3 || d1 < 3 {
        return Err(Error::invalid(format!(
            "Moran's I needs at least a 3x3 image, got {d0}x{d1}"
        )));
    }
    require_finite(values)?;
    let n = d0 * d1;
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let ssq: f64 = values.iter().map(|&x| (x - mean) * (x - mean)).sum();
    if ssq == 0.0 {
        return Err(Error::invalid("Moran's I is undefined for a constant image"));
    }
    // Each undirected neighbor pair contributes twice to the weighted sum;
    // accumulate undirected and double.
    let mut cross = 0.0f64;
    for i in 0..d0 {
        for j in 0..d1 {
            let x = values[i * d1 + j] - mean;
            if i + 1 < d0 {
                cross += x * (values[(i + 1) * d1 + j] - mean);
            }
            if j + 1 < d1 {
                cross += x * (values[i * d1 + j + 1] - mean);
            }
        }
    }
    cross *= 2.0;

    let (w, s1, s2) = rook_moments(d0, d1);
    let statistic = (nf * cross) / (w * ssq);
    let expect = -1.0 / (nf - 1.0);
    let var = (nf * nf * s1 - nf * s2 + 3.0 * w * w) / (w * w * (nf * nf - 1.0))
        - expect * expect;
    let z = (statistic - expect) / var.sqrt();
    Ok(StatReport {
        test: "morans-i-rook",
        statistic,
        p_value: libm::erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0),
        n,
    })
}

/// 2-Wasserstein distance between two presorted samples of equal length:
/// root mean square of the quantile differences.
fn w2_presorted(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let ssq: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum();
    (ssq / a.len() as f64).sqrt()
}

/// Empirical 1-D 2-Wasserstein distance between two sample sets (quantile
/// coupling of the sorted samples).
///
/// Unequal sample counts are reconciled by reading the longer set at the
/// evenly spaced quantiles of the shorter one.
pub fn wasserstein2_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("Wasserstein distance needs non-empty samples"));
    }
    require_finite(a)?;
    require_finite(b)?;
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_unstable_by(f64::total_cmp);
    sb.sort_unstable_by(f64::total_cmp);
    let (short, long) = if sa.len() <= sb.len() { (&sa, &sb) } else { (&sb, &sa) };
    if short.len() == long.len() {
        return Ok(w2_presorted(short, long));
    }
    let m = short.len() as f64;
    let l = long.len() as f64;
    let ssq: f64 = short
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let q = ((k as f64 + 0.5) * l / m) as usize;
            let y = long[q.min(long.len() - 1)];
            (x - y) * (x - y)
        })
        .sum();
    Ok((ssq / m).sqrt())
}

/// One row of the convergence experiment: upsampling factor and the mean and
/// max (over pixels) per-pixel W2 distance to the bridge warp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub n: u32,
    pub mean_w: f64,
    pub max_w: f64,
}

/// Per-run seeds: distinct warp streams per method within each run.
fn run_seeds(seed: u64, run: usize) -> u64 {
    derive_seed(derive_seed(seed, stream::RUN), run as u64)
}

fn check_experiment_prior(prior: &NoiseTensor, flow: &FlowField) -> Result<()> {
    if prior.shape() != flow.shape() {
        return Err(Error::invalid(format!(
            "prior shape {:?} does not match flow shape {:?}",
            prior.shape(),
            flow.shape()
        )));
    }
    prior.single_channel().map(|_| ())
}

/// Measures how the finite-N upsampled warp converges to the bridge warp.
///
/// One fixed prior image is re-warped `runs` times by each method with
/// independent warp randomness; the per-pixel empirical distributions
/// (conditional on that prior) are compared by W2, reported as mean and max
/// over pixels, one row per upsampling factor.
///
/// The prior must stay fixed for the distance to carry signal: marginally
/// both methods output exactly N(0,1) at every upsampling factor, so
/// unconditional per-pixel marginals cannot distinguish them. Conditioned on
/// the prior, the finite-N warp quantizes each source's contribution to a
/// subpixel count while the bridge warp uses the exact overlap area, so the
/// conditional laws differ at small factors and converge as the factor grows.
pub fn convergence_experiment(
    prior: &NoiseTensor,
    flow: &FlowField,
    n_list: &[u32],
    runs: usize,
    seed: u64,
) -> Result<Vec<ConvergenceRow>> {
    if runs < 1000 {
        return Err(Error::invalid(format!(
            "convergence experiment needs at least 1000 runs, got {runs}"
        )));
    }
    if n_list.is_empty() {
        return Err(Error::invalid("convergence experiment needs upsampling factors"));
    }
    check_experiment_prior(prior, flow)?;
    let n_px = prior.n_pixels();
    let record = build_grid_partition(flow)?;
    let plans = n_list
        .iter()
        .map(|&n| HiwynPlan::new(flow, n))
        .collect::<Result<Vec<_>>>()?;

    // Runs are independent; order of completion does not matter because each
    // run writes only its own slot.
    let per_run: Vec<(Vec<f64>, Vec<Vec<f64>>)> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let rs = run_seeds(seed, r);
            let bridge_out = warp_noise(prior, &record, derive_seed(rs, 2))?;
            let mut ups = Vec::with_capacity(plans.len());
            for (ni, plan) in plans.iter().enumerate() {
                let up = hiwyn_warp_with_plan(prior, plan, derive_seed(rs, 3 + ni as u64))?;
                ups.push(up.warped.single_channel()?.to_vec());
            }
            Ok((bridge_out.warped.single_channel()?.to_vec(), ups))
        })
        .collect::<Result<Vec<_>>>()?;

    // Column-major sample matrices: samples of pixel p occupy p*runs..(p+1)*runs.
    let mut reference = vec![0.0f64; n_px * runs];
    let mut upsampled: Vec<Vec<f64>> = vec![vec![0.0f64; n_px * runs]; n_list.len()];
    for (r, (ref_row, up_rows)) in per_run.iter().enumerate() {
        for p in 0..n_px {
            reference[p * runs + r] = ref_row[p];
        }
        for (ni, row) in up_rows.iter().enumerate() {
            for p in 0..n_px {
                upsampled[ni][p * runs + r] = row[p];
            }
        }
    }
    drop(per_run);

    for p in 0..n_px {
        reference[p * runs..(p + 1) * runs].sort_unstable_by(f64::total_cmp);
    }
    let mut rows = Vec::with_capacity(n_list.len());
    for (ni, &n) in n_list.iter().enumerate() {
        let cols = &mut upsampled[ni];
        let (mut sum, mut max) = (0.0f64, 0.0f64);
        for p in 0..n_px {
            let col = &mut cols[p * runs..(p + 1) * runs];
            col.sort_unstable_by(f64::total_cmp);
            let w = w2_presorted(&reference[p * runs..(p + 1) * runs], col);
            sum += w;
            max = max.max(w);
        }
        rows.push(ConvergenceRow {
            n,
            mean_w: sum / n_px as f64,
            max_w: max,
        });
    }
    Ok(rows)
}

/// Noise floor of the convergence experiment: the same per-pixel W2, between
/// two independently seeded bridge warps of the same fixed prior. Returns
/// `(mean, max)` over pixels.
pub fn self_distance_experiment(
    prior: &NoiseTensor,
    flow: &FlowField,
    runs: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if runs < 1000 {
        return Err(Error::invalid(format!(
            "self-distance experiment needs at least 1000 runs, got {runs}"
        )));
    }
    check_experiment_prior(prior, flow)?;
    let n_px = prior.n_pixels();
    let record = build_grid_partition(flow)?;
    let per_run: Vec<(Vec<f64>, Vec<f64>)> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let rs = run_seeds(seed, r);
            let a = warp_noise(prior, &record, derive_seed(rs, 2))?;
            let b = warp_noise(prior, &record, derive_seed(rs, 4))?;
            Ok((
                a.warped.single_channel()?.to_vec(),
                b.warped.single_channel()?.to_vec(),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut first = vec![0.0f64; n_px * runs];
    let mut second = vec![0.0f64; n_px * runs];
    for (r, (a, b)) in per_run.iter().enumerate() {
        for p in 0..n_px {
            first[p * runs + r] = a[p];
            second[p * runs + r] = b[p];
        }
    }
    drop(per_run);
    let (mut sum, mut max) = (0.0f64, 0.0f64);
    for p in 0..n_px {
        let fa = &mut first[p * runs..(p + 1) * runs];
        fa.sort_unstable_by(f64::total_cmp);
        let fb = &mut second[p * runs..(p + 1) * runs];
        fb.sort_unstable_by(f64::total_cmp);
        let w = w2_presorted(fa, fb);
        sum += w;
        max = max.max(w);
    }
    Ok((sum / n_px as f64, max))
}
