//! Noise warping that preserves the white-noise distribution exactly.
//!
//! Transporting a Gaussian white-noise image along a deformation by ordinary
//! resampling destroys what makes it noise: interpolation averages
//! independent values, shrinking variance and correlating neighbors. This
//! crate instead treats every pixel value as the endpoint of a Brownian
//! bridge and moves *distribution* rather than samples: each deformed pixel
//! gathers bridge increments sized by how much of each source pixel it
//! covers, and comes out exactly `N(0, 1)` again — at any resolution, under
//! any finite deformation, in 2-D or 3-D.
//!
//! The pieces:
//!
//! * [`tensor`] — noise images/volumes and flow fields, plus layout rules.
//! * [`rng`] — counter-based keyed randomness: bit-reproducible for any
//!   evaluation order or thread count.
//! * [`bridge`] — Brownian-bridge conditional sampling on the unit interval.
//! * [`record`] — the source→destination area partition in CSR form.
//! * [`grid`] / [`particle`] — partition builders: exact deformed-cell
//!   polygon clipping (2-D), and point-sample multilinear deposit (2-D/3-D).
//! * [`warp`] — the transport kernel and multi-step warping.
//! * [`hiwyn`] — the finite-`N` upsampling reference method (gather and
//!   scatter forms) this crate's warp is the limit of.
//! * [`baseline`] — interpolation warps that do *not* preserve noise, for
//!   comparison.
//! * [`stats`] — the verification battery: K-S normality, Moran's I spatial
//!   independence, Wasserstein convergence experiments.
//! * [`io`] — `.nwt` tensor files, `.flo` flow files, PGM export.
//! * [`alloc_track`] — opt-in peak-heap measurement for benchmarks.

pub mod alloc_track;
pub mod baseline;
pub mod bridge;
pub mod error;
pub mod geom;
pub mod grid;
pub mod hiwyn;
pub mod io;
pub mod particle;
pub mod record;
pub mod rng;
pub mod stats;
pub mod tensor;
pub mod warp;

pub use baseline::{warp_interpolated, InterpKernel};
pub use bridge::{bridge_prefix_path, bridge_step, sample_upsampled_subimage, BridgeState};
pub use error::{Error, Result};
pub use grid::build_grid_partition;
pub use hiwyn::{
    hiwyn_warp, hiwyn_warp_eulerian, hiwyn_warp_eulerian_with_plan, hiwyn_warp_with_plan,
    HiwynPlan,
};
pub use io::{export_pgm, read_flo, read_tensor, write_flo, write_tensor};
pub use particle::{build_particle_partition, build_particle_partition_3d};
pub use record::PartitionRecord;
pub use stats::{
    convergence_experiment, ks_test_standard_normal, morans_i, self_distance_experiment,
    wasserstein2_1d, ConvergenceRow, StatReport,
};
pub use tensor::{make_prior_noise, FlowField, NoiseTensor};
pub use warp::{build_partition, warp_noise, warp_sequence, PartitionMethod, WarpOutput};
