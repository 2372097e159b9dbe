//! Fixed Gaussian mixtures: construction, densities, posteriors, moments,
//! and the JSON model file format.

mod covariance;
mod gmm;
pub mod io;

pub(crate) use covariance::symmetrize;
pub use covariance::{build_covariance, decompose_covariance, CovarianceSpec, ModelName};
pub use gmm::{GaussianMixture, Responsibilities};

use nalgebra::DMatrix;

/// Copies an `n x d` matrix into a row-major buffer.
pub(crate) fn to_rows(points: &DMatrix<f64>) -> Vec<f64> {
    let (n, d) = points.shape();
    let mut out = Vec::with_capacity(n * d);
    for i in 0..n {
        for j in 0..d {
            out.push(points[(i, j)]);
        }
    }
    out
}

pub(crate) fn from_rows(n: usize, d: usize, rows: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(n, d, rows)
}

/// `log Σ exp(v)`, with an all `-inf` input mapping to `-inf`.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let sum: f64 = v.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}
