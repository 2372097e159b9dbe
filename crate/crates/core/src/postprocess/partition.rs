use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::merge::{merge_tight_clusters, ModeSet};
use super::volume::{
    density_threshold, log_volume_data_box, log_volume_gaussian_ellipsoid, log_volume_min_of, log_volume_pca_box,
    VolumeEstimate,
};
use crate::error::{Error, Result};
use crate::mem::{run_mem, MemConfig, MemResult};
use crate::mixture::GaussianMixture;

/// Identifier recorded in outputs for how orphaned points are reassigned.
pub const REASSIGNMENT_RULE: &str = "nearest_retained_mode_mahalanobis_marginal";

/// Volume estimator used for dropping low-density modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Denoise {
    None,
    #[default]
    Gaussian,
    DataBox,
    PcaBox,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub mem: MemConfig,
    /// Defaults to [`default_merge_tol`] when unset.
    pub merge_tol: Option<f64>,
    pub denoise: Denoise,
    pub alpha: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            mem: MemConfig::default(),
            merge_tol: None,
            denoise: Denoise::Gaussian,
            alpha: 0.01,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModalPartition {
    /// Cluster label (0-based index into `modes`) per input point.
    pub labels: Vec<usize>,
    /// Retained modes, `M x d`.
    pub modes: DMatrix<f64>,
    pub mode_log_density: Vec<f64>,
    pub dropped_modes: DMatrix<f64>,
    pub dropped_log_density: Vec<f64>,
    pub volume: Option<VolumeEstimate>,
    pub merge_tol: f64,
    /// Points moved from a dropped mode to a retained one.
    pub reassigned: usize,
    /// Every mode fell below the noise level; none were dropped.
    pub all_below_threshold: bool,
    pub iterations: usize,
    pub unconverged: Vec<usize>,
}

impl ModalPartition {
    pub fn n_clusters(&self) -> usize {
        self.modes.nrows()
    }

    pub fn log_volume_used(&self) -> Option<f64> {
        self.volume.map(|v| v.log_volume)
    }

    fn keep_all(modeset: &ModeSet, log_density: Vec<f64>, volume: Option<VolumeEstimate>, all_below: bool) -> Self {
        Self {
            labels: modeset.assignment.clone(),
            modes: modeset.modes.clone(),
            mode_log_density: log_density,
            dropped_modes: DMatrix::zeros(0, modeset.modes.ncols()),
            dropped_log_density: Vec::new(),
            volume,
            merge_tol: modeset.merge_tol,
            reassigned: 0,
            all_below_threshold: all_below,
            iterations: 0,
            unconverged: Vec::new(),
        }
    }
}

/// One percent of the average marginal standard deviation.
pub fn default_merge_tol(mixture: &GaussianMixture) -> f64 {
    let (_, cov) = mixture.marginal_moments();
    1e-2 * (cov.trace() / mixture.dim() as f64).sqrt()
}

fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

/// Drops modes whose log-density does not exceed `-log V` and moves their
/// points to the retained mode nearest in Mahalanobis distance under the
/// mixture's marginal covariance.
///
/// If every mode is below the threshold nothing is dropped and
/// `all_below_threshold` is set.
pub fn denoise_modes(modeset: &ModeSet, mixture: &GaussianMixture, volume: &VolumeEstimate) -> Result<ModalPartition> {
    if modeset.n_modes() == 0 {
        return Err(Error::EmptyModeSet);
    }
    mixture.check_dim(&modeset.modes)?;
    let log_density: Vec<f64> = modeset.mode_log_density(mixture)?.iter().copied().collect();
    let threshold = density_threshold(volume);
    let retained: Vec<usize> = (0..modeset.n_modes()).filter(|&m| log_density[m] > threshold).collect();
    if retained.is_empty() {
        return Ok(ModalPartition::keep_all(modeset, log_density, Some(*volume), true));
    }
    let dropped: Vec<usize> = (0..modeset.n_modes())
        .filter(|&m| log_density[m] <= threshold)
        .collect();
    if dropped.is_empty() {
        return Ok(ModalPartition::keep_all(modeset, log_density, Some(*volume), false));
    }

    let (_, cov) = mixture.marginal_moments();
    let chol = cov.cholesky().ok_or(Error::NotPositiveDefinite {
        context: "marginal covariance".into(),
    })?;
    let mut new_label = vec![usize::MAX; modeset.n_modes()];
    for (idx, &m) in retained.iter().enumerate() {
        new_label[m] = idx;
    }
    for &m in &dropped {
        let here = modeset.modes.row(m).transpose();
        let mut best = (f64::INFINITY, 0);
        for (idx, &r) in retained.iter().enumerate() {
            let diff: DVector<f64> = &here - modeset.modes.row(r).transpose();
            let y = chol
                .l()
                .solve_lower_triangular(&diff)
                .expect("cholesky factor is invertible");
            let dist = y.norm_squared();
            if dist < best.0 {
                best = (dist, idx);
            }
        }
        new_label[m] = best.1;
    }
    let labels: Vec<usize> = modeset.assignment.iter().map(|&a| new_label[a]).collect();
    let reassigned = modeset.assignment.iter().filter(|&&a| dropped.contains(&a)).count();

    Ok(ModalPartition {
        labels,
        modes: select_rows(&modeset.modes, &retained),
        mode_log_density: retained.iter().map(|&m| log_density[m]).collect(),
        dropped_modes: select_rows(&modeset.modes, &dropped),
        dropped_log_density: dropped.iter().map(|&m| log_density[m]).collect(),
        volume: Some(*volume),
        merge_tol: modeset.merge_tol,
        reassigned,
        all_below_threshold: false,
        iterations: 0,
        unconverged: Vec::new(),
    })
}

fn estimate_volume(
    mixture: &GaussianMixture,
    x: &DMatrix<f64>,
    config: &ClusterConfig,
) -> Result<Option<VolumeEstimate>> {
    Ok(match config.denoise {
        Denoise::None => None,
        Denoise::Gaussian => Some(log_volume_gaussian_ellipsoid(mixture, config.alpha)?),
        Denoise::DataBox => Some(log_volume_data_box(x)?),
        Denoise::PcaBox => Some(log_volume_pca_box(x)?),
        Denoise::Min => Some(log_volume_min_of(x, mixture, config.alpha)?),
    })
}

/// MEM from every row of `x`, tight-cluster merging, then optional
/// denoising. Also returns the raw MEM result.
pub fn modal_cluster_detailed(
    mixture: &GaussianMixture,
    x: &DMatrix<f64>,
    config: &ClusterConfig,
) -> Result<(ModalPartition, MemResult)> {
    let merge_tol = config.merge_tol.unwrap_or_else(|| default_merge_tol(mixture));
    let volume = estimate_volume(mixture, x, config)?;
    let mem = run_mem(mixture, x, &config.mem)?;
    let modeset = merge_tight_clusters(&mem.converged_points, merge_tol)?;
    let mut partition = match volume {
        Some(v) => denoise_modes(&modeset, mixture, &v)?,
        None => {
            let ld = modeset.mode_log_density(mixture)?.iter().copied().collect();
            ModalPartition::keep_all(&modeset, ld, None, false)
        }
    };
    partition.iterations = mem.iterations;
    partition.unconverged = mem.unconverged.clone();
    Ok((partition, mem))
}

pub fn modal_cluster(mixture: &GaussianMixture, x: &DMatrix<f64>, config: &ClusterConfig) -> Result<ModalPartition> {
    modal_cluster_detailed(mixture, x, config).map(|(p, _)| p)
}

/// Mode labels over a regular 2-D lattice of starting points.
#[derive(Debug, Clone)]
pub struct AttractionGrid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Label of node `(ix, iy)` at index `iy * xs.len() + ix`.
    pub labels: Vec<usize>,
    /// Iteration at which each node froze.
    pub converged_at: Vec<Option<usize>>,
    pub partition: ModalPartition,
}

impl AttractionGrid {
    pub fn label_at(&self, ix: usize, iy: usize) -> usize {
        self.labels[iy * self.xs.len() + ix]
    }
}

fn lattice(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    (0..count)
        .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
        .collect()
}

/// Regular 2-D lattice over `bounds` with `resolution` nodes per axis.
/// Returns the axis values and the nodes as rows, `x` varying fastest.
pub fn lattice_nodes(bounds: [(f64, f64); 2], resolution: [usize; 2]) -> Result<(Vec<f64>, Vec<f64>, DMatrix<f64>)> {
    for (axis, (&(lo, hi), &r)) in bounds.iter().zip(&resolution).enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::validation(
                format!("bounds[{axis}]"),
                format!("need finite lo <= hi, got [{lo}, {hi}]"),
            ));
        }
        if r == 0 {
            return Err(Error::validation(format!("resolution[{axis}]"), "must be at least 1"));
        }
    }
    let xs = lattice(bounds[0].0, bounds[0].1, resolution[0]);
    let ys = lattice(bounds[1].0, bounds[1].1, resolution[1]);
    let nodes = DMatrix::from_fn(xs.len() * ys.len(), 2, |i, j| {
        if j == 0 {
            xs[i % xs.len()]
        } else {
            ys[i / xs.len()]
        }
    });
    Ok((xs, ys, nodes))
}

/// Runs modal clustering with every lattice node as a starting point.
pub fn attraction_partition_grid(
    mixture: &GaussianMixture,
    bounds: [(f64, f64); 2],
    resolution: [usize; 2],
    config: &ClusterConfig,
) -> Result<AttractionGrid> {
    if mixture.dim() != 2 {
        return Err(Error::UnsupportedDimension {
            required: 2,
            found: mixture.dim(),
        });
    }
    let (xs, ys, nodes) = lattice_nodes(bounds, resolution)?;
    let (partition, mem) = modal_cluster_detailed(mixture, &nodes, config)?;
    Ok(AttractionGrid {
        xs,
        ys,
        labels: partition.labels.clone(),
        converged_at: mem.converged_at,
        partition,
    })
}
