//! Hypervolume of the data region, used as the uniform-noise density level.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::mixture::GaussianMixture;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeMethod {
    DataBox,
    PcaBox,
    GaussianEllipsoid,
    /// Smallest of the three estimators above.
    MinOf,
}

impl std::fmt::Display for VolumeMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            VolumeMethod::DataBox => "data_box",
            VolumeMethod::PcaBox => "pca_box",
            VolumeMethod::GaussianEllipsoid => "gaussian_ellipsoid",
            VolumeMethod::MinOf => "min_of",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeEstimate {
    pub log_volume: f64,
    pub method: VolumeMethod,
    /// Tail probability of the Gaussian central region, when one was used.
    pub alpha: Option<f64>,
}

/// Log-density of the uniform distribution over the region: `-log V`.
pub fn density_threshold(v: &VolumeEstimate) -> f64 {
    -v.log_volume
}

fn check_data(x: &DMatrix<f64>) -> Result<()> {
    if x.nrows() < 2 {
        return Err(Error::DegenerateData(format!(
            "need at least 2 points, got {}",
            x.nrows()
        )));
    }
    if x.ncols() == 0 {
        return Err(Error::DegenerateData("zero-dimensional data".into()));
    }
    Ok(())
}

fn log_box(x: &DMatrix<f64>) -> Result<f64> {
    let mut total = 0.0;
    for (j, col) in x.column_iter().enumerate() {
        let range = col.max() - col.min();
        if !(range > 0.0 && range.is_finite()) {
            return Err(Error::DegenerateData(format!("coordinate {j} has no spread")));
        }
        total += range.ln();
    }
    Ok(total)
}

/// Log volume of the axis-aligned bounding box of the data.
pub fn log_volume_data_box(x: &DMatrix<f64>) -> Result<VolumeEstimate> {
    check_data(x)?;
    Ok(VolumeEstimate {
        log_volume: log_box(x)?,
        method: VolumeMethod::DataBox,
        alpha: None,
    })
}

/// Log volume of the bounding box of the principal component scores.
pub fn log_volume_pca_box(x: &DMatrix<f64>) -> Result<VolumeEstimate> {
    check_data(x)?;
    let (n, d) = x.shape();
    let mean = x.row_mean();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let largest = eig.eigenvalues.max();
    let smallest = eig.eigenvalues.min();
    if !(largest > 0.0) || smallest <= 1e-12 * largest {
        return Err(Error::DegenerateData(format!(
            "sample covariance is rank deficient (d = {d})"
        )));
    }
    let scores = centered * eig.eigenvectors;
    Ok(VolumeEstimate {
        log_volume: log_box(&scores)?,
        method: VolumeMethod::PcaBox,
        alpha: None,
    })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::validation("alpha", format!("must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// statrs inverts the CDF to about 1e-10 relative; two Newton steps on the
/// (accurate) CDF bring it to full precision.
pub(crate) fn chi_squared_quantile(df: f64, p: f64) -> Result<f64> {
    let dist = ChiSquared::new(df).map_err(|e| Error::validation("d", e.to_string()))?;
    let mut q = dist.inverse_cdf(p);
    for _ in 0..2 {
        let density = dist.pdf(q);
        if !(density > 0.0) {
            break;
        }
        let next = q - (dist.cdf(q) - p) / density;
        if next > 0.0 && next.is_finite() {
            q = next;
        }
    }
    Ok(q)
}

/// Log volume of the central `(1 - alpha)` ellipsoid of `N(·, cov)`:
/// `log 2 + (d/2) log π - log d - log Γ(d/2) + (d/2) log χ²_{1-α}(d) + ½ log|cov|`.
pub fn gaussian_ellipsoid_log_volume(cov: &DMatrix<f64>, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let d = cov.nrows();
    let chol = cov.clone().cholesky().ok_or(Error::NotPositiveDefinite {
        context: "ellipsoid covariance".into(),
    })?;
    let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let df = d as f64;
    let quantile = chi_squared_quantile(df, 1.0 - alpha)?;
    Ok(2f64.ln() + 0.5 * df * PI.ln() - df.ln() - ln_gamma(0.5 * df) + 0.5 * df * quantile.ln() + 0.5 * log_det)
}

/// Ellipsoid volume using the mixture's marginal covariance.
pub fn log_volume_gaussian_ellipsoid(mixture: &GaussianMixture, alpha: f64) -> Result<VolumeEstimate> {
    let (_, cov) = mixture.marginal_moments();
    Ok(VolumeEstimate {
        log_volume: gaussian_ellipsoid_log_volume(&cov, alpha)?,
        method: VolumeMethod::GaussianEllipsoid,
        alpha: Some(alpha),
    })
}

/// Minimum over the data box, PCA box and Gaussian ellipsoid. Box estimators
/// that fail on degenerate data are skipped.
pub fn log_volume_min_of(x: &DMatrix<f64>, mixture: &GaussianMixture, alpha: f64) -> Result<VolumeEstimate> {
    let mut best = log_volume_gaussian_ellipsoid(mixture, alpha)?.log_volume;
    for v in [log_volume_data_box(x), log_volume_pca_box(x)].into_iter().flatten() {
        best = best.min(v.log_volume);
    }
    Ok(VolumeEstimate {
        log_volume: best,
        method: VolumeMethod::MinOf,
        alpha: Some(alpha),
    })
}
