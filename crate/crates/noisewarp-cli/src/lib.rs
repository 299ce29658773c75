//! Command-line surface for the noise-warping toolkit.
//!
//! Subcommands: `gen` (seeded prior noise), `warp` (one flow, any method),
//! `warp-seq` (iterative warping along a directory of flows), `stats`
//! (normality and spatial-independence report), `converge` (finite-N
//! upsampling vs. bridge-limit distance table), `bench` (timing and peak
//! allocation), `warp3d` (particle warp of a 3-D volume).
//!
//! Exit codes: 0 success, 1 argument/format error, 2 internal invariant
//! violation. The environment variable `NOISEWARP_THREADS` caps the worker
//! count (0 = all cores).

use clap::{Parser, Subcommand, ValueEnum};
use noisewarp::{
    build_particle_partition_3d, build_partition, convergence_experiment, export_pgm, hiwyn_warp,
    ks_test_standard_normal, make_prior_noise, morans_i, read_flo, read_tensor,
    self_distance_experiment, warp_interpolated, warp_noise, warp_sequence, write_tensor, Error,
    FlowField, InterpKernel, NoiseTensor, PartitionMethod, Result, StatReport, WarpOutput,
};
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "noisewarp",
    version,
    about = "Warp Gaussian white noise along deformation maps without disturbing its distribution"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Method {
    /// Deformed-outline partition (octagon clipping), then bridge warp.
    Grid,
    /// Particle partition (multilinear kernel), then bridge warp.
    Particle,
    /// Finite-N upsampling reference warp.
    Hiwyn,
    /// Bilinear interpolation baseline (not distribution preserving).
    Bilinear,
    /// Bicubic interpolation baseline (not distribution preserving).
    Bicubic,
    /// Nearest-neighbor baseline.
    Nearest,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a seeded i.i.d. standard-normal noise tensor.
    Gen {
        /// Tensor shape, e.g. 128x128 or 16x16x16.
        #[arg(long)]
        shape: String,
        /// Channels per pixel.
        #[arg(long, default_value_t = 1)]
        channels: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output tensor path (.nwt).
        #[arg(long)]
        out: PathBuf,
        /// Also export a grayscale preview (2-D single-channel only).
        #[arg(long)]
        pgm: Option<PathBuf>,
    },
    /// Warp a noise tensor along one flow field.
    Warp {
        /// Input noise tensor (.nwt).
        #[arg(long)]
        input: PathBuf,
        /// Flow field: .flo, or a tensor whose channel count equals its rank.
        #[arg(long)]
        flow: PathBuf,
        #[arg(long, value_enum)]
        method: Method,
        /// Upsampling factor for --method hiwyn.
        #[arg(long, default_value_t = 8)]
        upsample: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Negate the flow before warping.
        #[arg(long)]
        negate_flow: bool,
        /// Output tensor path (.nwt).
        #[arg(long)]
        out: PathBuf,
        /// Also export a grayscale preview (2-D single-channel only).
        #[arg(long)]
        pgm: Option<PathBuf>,
    },
    /// Iteratively warp along every .flo file of a directory (sorted by name).
    WarpSeq {
        /// Input noise tensor (.nwt).
        #[arg(long)]
        input: PathBuf,
        /// Directory containing .flo files.
        #[arg(long)]
        flows: PathBuf,
        /// Partition method for the bridge warp.
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Negate every flow before warping.
        #[arg(long)]
        negate_flow: bool,
        /// Directory for frame_NNNN.nwt outputs (frame 0 = the prior).
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Report K-S normality and Moran spatial-independence statistics.
    Stats {
        /// Input noise tensor (.nwt).
        #[arg(long)]
        input: PathBuf,
        /// Also write the report as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Distance of the finite-N upsampling warp to the bridge limit.
    Converge {
        /// Fixed prior tensor (single channel) re-warped every run.
        #[arg(long)]
        input: PathBuf,
        /// Flow field (.flo or tensor), same resolution as the prior.
        #[arg(long)]
        flow: PathBuf,
        /// Runs per method (at least 1000).
        #[arg(long, default_value_t = 20_000)]
        runs: usize,
        /// Comma-separated upsampling factors.
        #[arg(long, default_value = "2,4,8,16,64")]
        levels: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Time one full warp (partition build + kernel) on a synthetic vortex.
    Bench {
        /// Square grid edge length.
        #[arg(long, default_value_t = 1024)]
        size: usize,
        /// Timed repetitions (median and MAD reported).
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, value_enum)]
        method: Method,
        /// Upsampling factor for --method hiwyn.
        #[arg(long, default_value_t = 8)]
        upsample: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Particle-warp a 3-D volume along a 3-D flow tensor.
    Warp3d {
        /// Input noise volume (.nwt, rank 3).
        #[arg(long)]
        input: PathBuf,
        /// Flow tensor (rank 3, 3 channels).
        #[arg(long)]
        flow: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Negate the flow before warping.
        #[arg(long)]
        negate_flow: bool,
        /// Output tensor path (.nwt).
        #[arg(long)]
        out: PathBuf,
    },
}

/// Entry point shared by the binary and the tests; returns the process exit
/// code instead of exiting.
pub fn cli_main(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests print to stdout and succeed; real
            // parse errors print usage to stderr and fail.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    configure_threads();
    match run(cli.cmd) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Applies NOISEWARP_THREADS to the global worker pool (0 = all cores).
fn configure_threads() {
    let Ok(raw) = std::env::var("NOISEWARP_THREADS") else {
        return;
    };
    match raw.trim().parse::<usize>() {
        Ok(0) => {} // all cores: the default pool
        Ok(n) => {
            // A second initialization (tests calling cli_main repeatedly) is
            // harmless: the first pool stays in effect.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        Err(_) => eprintln!("warning: ignoring non-numeric NOISEWARP_THREADS={raw}"),
    }
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Gen {
            shape,
            channels,
            seed,
            out,
            pgm,
        } => {
            let shape = parse_shape(&shape)?;
            let noise = make_prior_noise(&shape, channels, seed)?;
            write_tensor(&noise, &out)?;
            if let Some(p) = pgm {
                export_pgm(&noise, &p, 3.0)?;
            }
            println!(
                "wrote {} ({} pixels, {} channel{})",
                out.display(),
                noise.n_pixels(),
                channels,
                if channels == 1 { "" } else { "s" }
            );
            Ok(())
        }
        Cmd::Warp {
            input,
            flow,
            method,
            upsample,
            seed,
            negate_flow,
            out,
            pgm,
        } => {
            let prior = read_tensor(&input)?;
            let flow = load_flow(&flow, negate_flow)?;
            check_resolution(&prior, &flow)?;
            let warped = match method {
                Method::Grid => report_warp(warp_noise(
                    &prior,
                    &build_partition(&flow, PartitionMethod::Grid)?,
                    seed,
                )?),
                Method::Particle => report_warp(warp_noise(
                    &prior,
                    &build_partition(&flow, PartitionMethod::Particle)?,
                    seed,
                )?),
                Method::Hiwyn => report_warp(hiwyn_warp(&prior, &flow, upsample, seed)?),
                Method::Bilinear => warp_interpolated(&prior, &flow, InterpKernel::Bilinear)?,
                Method::Bicubic => warp_interpolated(&prior, &flow, InterpKernel::Bicubic)?,
                Method::Nearest => warp_interpolated(&prior, &flow, InterpKernel::Nearest)?,
            };
            write_tensor(&warped, &out)?;
            if let Some(p) = pgm {
                export_pgm(&warped, &p, 3.0)?;
            }
            println!("wrote {}", out.display());
            Ok(())
        }
        Cmd::WarpSeq {
            input,
            flows,
            method,
            seed,
            negate_flow,
            out_dir,
        } => {
            let prior = read_tensor(&input)?;
            let method = partition_method(method)?;
            let mut flow_fields = Vec::new();
            for path in sorted_flo_files(&flows)? {
                let f = load_flow(&path, negate_flow)?;
                check_resolution(&prior, &f)?;
                flow_fields.push(f);
            }
            let frames = warp_sequence(&prior, &flow_fields, method, seed)?;
            std::fs::create_dir_all(&out_dir).map_err(Error::from)?;
            for (k, frame) in frames.iter().enumerate() {
                write_tensor(frame, out_dir.join(format!("frame_{k:04}.nwt")))?;
            }
            println!("wrote {} frames to {}", frames.len(), out_dir.display());
            Ok(())
        }
        Cmd::Stats { input, csv } => {
            let noise = read_tensor(&input)?;
            let reports = collect_stats(&noise)?;
            for (label, rep) in &reports {
                println!(
                    "{label:<24} statistic={:+.6e}  p={:.6e}  n={}",
                    rep.statistic, rep.p_value, rep.n
                );
            }
            if let Some(path) = csv {
                let mut text = String::from("test,statistic,p_value,n\n");
                for (label, rep) in &reports {
                    text.push_str(&format!(
                        "{label},{:e},{:e},{}\n",
                        rep.statistic, rep.p_value, rep.n
                    ));
                }
                std::fs::write(&path, text).map_err(Error::from)?;
            }
            Ok(())
        }
        Cmd::Converge {
            input,
            flow,
            runs,
            levels,
            seed,
            csv,
        } => {
            let prior = read_tensor(&input)?;
            let flow = load_flow(&flow, false)?;
            check_resolution(&prior, &flow)?;
            let levels = parse_levels(&levels)?;
            let rows = convergence_experiment(&prior, &flow, &levels, runs, seed)?;
            let (self_mean, self_max) = self_distance_experiment(&prior, &flow, runs, seed)?;
            println!("{:>6}  {:>12}  {:>12}", "N", "mean_W2", "max_W2");
            for row in &rows {
                println!("{:>6}  {:>12.6e}  {:>12.6e}", row.n, row.mean_w, row.max_w);
            }
            println!("{:>6}  {:>12.6e}  {:>12.6e}", "self", self_mean, self_max);
            if let Some(path) = csv {
                let mut text = String::from("n,mean_w2,max_w2\n");
                for row in &rows {
                    text.push_str(&format!("{},{:e},{:e}\n", row.n, row.mean_w, row.max_w));
                }
                text.push_str(&format!("self,{self_mean:e},{self_max:e}\n"));
                std::fs::write(&path, text).map_err(Error::from)?;
            }
            Ok(())
        }
        Cmd::Bench {
            size,
            reps,
            method,
            upsample,
            seed,
        } => bench(size, reps, method, upsample, seed),
        Cmd::Warp3d {
            input,
            flow,
            seed,
            negate_flow,
            out,
        } => {
            let prior = read_tensor(&input)?;
            let flow = load_flow(&flow, negate_flow)?;
            check_resolution(&prior, &flow)?;
            let record = build_particle_partition_3d(&flow)?;
            let warped = report_warp(warp_noise(&prior, &record, seed)?);
            write_tensor(&warped, &out)?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn parse_shape(s: &str) -> Result<Vec<usize>> {
    let dims: Vec<usize> = s
        .split('x')
        .map(|part| part.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::invalid(format!("bad shape '{s}': expected e.g. 128x128")))?;
    if dims.is_empty() {
        return Err(Error::invalid("shape must have at least one extent"));
    }
    Ok(dims)
}

fn parse_levels(s: &str) -> Result<Vec<u32>> {
    let levels: Vec<u32> = s
        .split(',')
        .map(|part| part.trim().parse::<u32>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::invalid(format!("bad levels '{s}': expected e.g. 2,4,8")))?;
    if levels.is_empty() || levels.contains(&0) {
        return Err(Error::invalid("levels must be positive integers"));
    }
    Ok(levels)
}

fn partition_method(method: Method) -> Result<PartitionMethod> {
    match method {
        Method::Grid => Ok(PartitionMethod::Grid),
        Method::Particle => Ok(PartitionMethod::Particle),
        other => Err(Error::invalid(format!(
            "method {other:?} is not a partition method; use grid or particle"
        ))),
    }
}

/// Loads a flow field from a .flo file or from a tensor whose channel count
/// equals its rank, optionally negated.
fn load_flow(path: &Path, negate: bool) -> Result<FlowField> {
    let mut flow = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("flo")) {
        read_flo(path)?
    } else {
        FlowField::from_tensor(&read_tensor(path)?)?
    };
    if negate {
        flow.negate();
    }
    Ok(flow)
}

/// Flows must match the noise resolution exactly; resampling policy belongs
/// to the caller.
fn check_resolution(noise: &NoiseTensor, flow: &FlowField) -> Result<()> {
    if noise.shape() != flow.shape() {
        return Err(Error::invalid(format!(
            "flow resolution {:?} does not match noise {:?}; resample the flow first",
            flow.shape(),
            noise.shape()
        )));
    }
    Ok(())
}

/// Prints the warp's coverage report and passes the tensor through.
fn report_warp(out: WarpOutput) -> NoiseTensor {
    println!(
        "vacated: {}  clamp truncations: {} (area {:.3e})",
        out.vacated.len(),
        out.clamp_truncations,
        out.truncated_area
    );
    out.warped
}

fn sorted_flo_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(Error::from)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("flo")))
        .collect();
    if files.is_empty() {
        return Err(Error::invalid(format!(
            "no .flo files found in {}",
            dir.display()
        )));
    }
    files.sort();
    Ok(files)
}

/// K-S over the flattened samples, then Moran's I per channel for 2-D input.
fn collect_stats(noise: &NoiseTensor) -> Result<Vec<(String, StatReport)>> {
    let mut out = vec![(
        "ks-standard-normal".to_string(),
        ks_test_standard_normal(noise.data())?,
    )];
    if noise.dims() == 2 {
        for ch in 0..noise.channels() {
            let plane: Vec<f64> = (0..noise.n_pixels()).map(|p| noise.at(p, ch)).collect();
            let image = NoiseTensor::from_vec(noise.shape(), 1, plane)?;
            out.push((format!("moran-i[ch{ch}]"), morans_i(&image)?));
        }
    }
    Ok(out)
}

/// Deterministic smooth vortex used by `bench`: rotation strength decays
/// from the grid center over about a quarter of the edge length, with
/// displacements on the order of one pixel.
pub fn bench_flow(size: usize) -> Result<FlowField> {
    let half = size as f64 / 2.0;
    let sigma_sq = (size as f64 / 4.0).powi(2);
    let omega = 8.0 / size.max(1) as f64;
    FlowField::from_fn(&[size, size], |c| {
        let (dy, dx) = (c[0] - half, c[1] - half);
        let s = omega * (-(dy * dy + dx * dx) / (2.0 * sigma_sq)).exp();
        vec![-s * dx, s * dy]
    })
}

fn bench(size: usize, reps: usize, method: Method, upsample: u32, seed: u64) -> Result<()> {
    if size == 0 || reps == 0 {
        return Err(Error::invalid("bench needs size >= 1 and reps >= 1"));
    }
    let flow = bench_flow(size)?;
    let prior = make_prior_noise(&[size, size], 1, seed)?;

    // One full warp: partition/plan construction plus the warp kernel, the
    // per-frame cost of video-style use.
    let one_warp = |rep_seed: u64| -> Result<NoiseTensor> {
        Ok(match method {
            Method::Grid => {
                warp_noise(&prior, &build_partition(&flow, PartitionMethod::Grid)?, rep_seed)?
                    .warped
            }
            Method::Particle => warp_noise(
                &prior,
                &build_partition(&flow, PartitionMethod::Particle)?,
                rep_seed,
            )?
            .warped,
            Method::Hiwyn => hiwyn_warp(&prior, &flow, upsample, rep_seed)?.warped,
            Method::Bilinear => warp_interpolated(&prior, &flow, InterpKernel::Bilinear)?,
            Method::Bicubic => warp_interpolated(&prior, &flow, InterpKernel::Bicubic)?,
            Method::Nearest => warp_interpolated(&prior, &flow, InterpKernel::Nearest)?,
        })
    };

    // Warm-up rep: page in buffers and exclude one-time costs from timings.
    let mut sink = 0.0f64;
    sink += one_warp(seed.wrapping_add(1))?.at(0, 0);

    let mut times_ms = Vec::with_capacity(reps);
    for r in 0..reps {
        let t0 = Instant::now();
        let warped = one_warp(seed.wrapping_add(2 + r as u64))?;
        times_ms.push(t0.elapsed().as_secs_f64() * 1e3);
        sink += warped.at(0, 0);
    }
    // Peak allocation of one untimed representative run.
    let (last, peak) = noisewarp::alloc_track::measure_peak_alloc(|| one_warp(seed));
    sink += last?.at(0, 0);

    let median = median_of(&mut times_ms.clone());
    let mut deviations: Vec<f64> = times_ms.iter().map(|t| (t - median).abs()).collect();
    let mad = median_of(&mut deviations);
    let min = times_ms.iter().cloned().fold(f64::INFINITY, f64::min);
    let mean = times_ms.iter().sum::<f64>() / times_ms.len() as f64;

    println!(
        "method={method:?} size={size} reps={reps}{}",
        if method == Method::Hiwyn {
            format!(" upsample={upsample}")
        } else {
            String::new()
        }
    );
    println!("median {median:.3} ms   mad {mad:.3} ms   min {min:.3} ms   mean {mean:.3} ms");
    match peak {
        Some(bytes) => println!(
            "peak alloc {} bytes ({:.1} MiB)",
            bytes,
            bytes as f64 / (1024.0 * 1024.0)
        ),
        None => println!("peak alloc n/a (allocator tracking inactive)"),
    }
    // Keep the sink live so the timed work cannot be optimized away.
    if !sink.is_finite() {
        return Err(Error::Internal("benchmark produced non-finite output".into()));
    }
    Ok(())
}

fn median_of(xs: &mut [f64]) -> f64 {
    xs.sort_unstable_by(f64::total_cmp);
    let m = xs.len();
    if m % 2 == 1 {
        xs[m / 2]
    } else {
        0.5 * (xs[m / 2 - 1] + xs[m / 2])
    }
}
