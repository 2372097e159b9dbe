//! Modes of Gaussian mixture densities via Modal EM, and the modal
//! clustering built on them.
//!
//! The pieces, in pipeline order:
//!
//! - [`mixture`]: a fixed [`GaussianMixture`] with cached factorizations,
//!   log-densities, posteriors, marginal moments and the JSON model format.
//! - [`mem`]: the Modal EM iteration with the batched closed-form M-step
//!   and the exponential step-size schedule.
//! - [`postprocess`]: merging converged points into modes, noise-level
//!   volume estimates, low-density mode removal, and the final partition.
//! - [`fit`]: EM fitting and BIC selection for six covariance models, so a
//!   mixture can be estimated from raw data.
//! - [`synth`]: seeded generators for test and demo data.

// NaN-rejecting checks are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod fit;
mod linalg;
pub mod mem;
pub mod metrics;
pub mod mixture;
pub mod postprocess;
pub mod synth;

pub use error::{Error, Result};
pub use fit::{em_fit, n_parameters, select_model, FitConfig, FitResult, ModelSelection};
pub use mem::{
    damping_weight, log_density_gradient, m_step_batched, m_step_reference, mem_step, run_mem, run_mem_per_point,
    MemConfig, MemResult,
};
pub use mixture::{
    build_covariance, decompose_covariance, CovarianceSpec, GaussianMixture, ModelName, Responsibilities,
};
pub use postprocess::{
    attraction_partition_grid, denoise_modes, merge_tight_clusters, modal_cluster, AttractionGrid, ClusterConfig,
    Denoise, ModalPartition, ModeSet, VolumeEstimate, VolumeMethod,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
