use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::covariance::{decompose_covariance, symmetrize, CovarianceSpec, ModelName};
use super::{from_rows, log_sum_exp, to_rows};
use crate::error::{Error, Result};

const WEIGHT_SUM_TOL: f64 = 1e-12;
const INVERSE_TOL: f64 = 1e-8;

/// Rows per rayon task for point-wise kernels.
pub(crate) const PAR_CHUNK: usize = 256;

/// A Gaussian mixture with fixed parameters and per-component caches.
///
/// Immutable after construction; every cache is derived from the weights,
/// means and covariances.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    d: usize,
    model: ModelName,
    weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    covariances: Vec<DMatrix<f64>>,
    chol_lower: Vec<DMatrix<f64>>,
    precisions: Vec<DMatrix<f64>>,
    log_dets: Vec<f64>,
    // Row-major flat caches for the point-wise kernels.
    flat_means: Vec<f64>,
    flat_chol: Vec<f64>,
    flat_prec: Vec<f64>,
    flat_prec_mean: Vec<f64>,
    log_norm: Vec<f64>,
}

impl GaussianMixture {
    pub fn new(
        weights: Vec<f64>,
        means: Vec<DVector<f64>>,
        covariances: Vec<DMatrix<f64>>,
        model: ModelName,
    ) -> Result<Self> {
        let g = weights.len();
        if g == 0 {
            return Err(Error::validation("weights", "at least one component required"));
        }
        if means.len() != g {
            return Err(Error::validation(
                "means",
                format!("expected {g} mean vectors, got {}", means.len()),
            ));
        }
        if covariances.len() != g {
            return Err(Error::validation(
                "covariances",
                format!("expected {g} matrices, got {}", covariances.len()),
            ));
        }
        let d = means[0].len();
        if d == 0 {
            return Err(Error::validation("means[0]", "dimension must be at least 1"));
        }
        for (k, &w) in weights.iter().enumerate() {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::validation(
                    format!("weights[{k}]"),
                    format!("must be > 0, got {w}"),
                ));
            }
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::validation("weights", format!("must sum to 1, got {total:.17}")));
        }
        for (k, mu) in means.iter().enumerate() {
            if mu.len() != d {
                return Err(Error::validation(
                    format!("means[{k}]"),
                    format!("expected length {d}, got {}", mu.len()),
                ));
            }
            if mu.iter().any(|v| !v.is_finite()) {
                return Err(Error::validation(format!("means[{k}]"), "non-finite entry"));
            }
        }

        let mut covariances = covariances;
        let mut chol_lower = Vec::with_capacity(g);
        let mut precisions = Vec::with_capacity(g);
        let mut log_dets = Vec::with_capacity(g);
        for (k, sigma) in covariances.iter_mut().enumerate() {
            let path = format!("covariances[{k}]");
            if sigma.nrows() != d || sigma.ncols() != d {
                return Err(Error::validation(
                    path,
                    format!("expected {d}x{d}, got {}x{}", sigma.nrows(), sigma.ncols()),
                ));
            }
            if sigma.iter().any(|v| !v.is_finite()) {
                return Err(Error::validation(path, "non-finite entry"));
            }
            let asym = (sigma.clone() - sigma.transpose()).amax();
            if asym > 1e-10 * sigma.amax().max(1.0) {
                return Err(Error::validation(
                    path,
                    format!("not symmetric (max asymmetry {asym:e})"),
                ));
            }
            symmetrize(sigma);
            let chol = sigma
                .clone()
                .cholesky()
                .ok_or(Error::NotPositiveDefinite { context: path.clone() })?;
            let l = chol.l();
            let log_det = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
            let mut prec = chol.inverse();
            symmetrize(&mut prec);
            let dev = (&*sigma * &prec - DMatrix::<f64>::identity(d, d)).amax();
            if !(dev < INVERSE_TOL) {
                return Err(Error::validation(
                    path,
                    format!("too ill-conditioned (|ΣΣ⁻¹ - I| = {dev:e})"),
                ));
            }
            chol_lower.push(l);
            precisions.push(prec);
            log_dets.push(log_det);
        }

        let mut flat_means = Vec::with_capacity(g * d);
        let mut flat_chol = Vec::with_capacity(g * d * d);
        let mut flat_prec = Vec::with_capacity(g * d * d);
        let mut flat_prec_mean = Vec::with_capacity(g * d);
        let mut log_norm = Vec::with_capacity(g);
        let half_d_log_2pi = 0.5 * d as f64 * (2.0 * PI).ln();
        for k in 0..g {
            flat_means.extend(means[k].iter());
            for r in 0..d {
                for c in 0..d {
                    flat_chol.push(chol_lower[k][(r, c)]);
                    flat_prec.push(precisions[k][(r, c)]);
                }
            }
            let pm = &precisions[k] * &means[k];
            flat_prec_mean.extend(pm.iter());
            log_norm.push(weights[k].ln() - half_d_log_2pi - 0.5 * log_dets[k]);
        }

        Ok(Self {
            d,
            model,
            weights,
            means,
            covariances,
            chol_lower,
            precisions,
            log_dets,
            flat_means,
            flat_chol,
            flat_prec,
            flat_prec_mean,
            log_norm,
        })
    }

    /// Builds a mixture whose covariances are given in decomposed form.
    pub fn from_specs(
        weights: Vec<f64>,
        means: Vec<DVector<f64>>,
        specs: &[CovarianceSpec],
        model: ModelName,
    ) -> Result<Self> {
        let covs = specs
            .iter()
            .enumerate()
            .map(|(k, s)| {
                super::build_covariance(s).map_err(|e| match e {
                    Error::Validation { path, reason } => Error::validation(format!("spec[{k}].{path}"), reason),
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(weights, means, covs, model)
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn model(&self) -> ModelName {
        self.model
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn covariances(&self) -> &[DMatrix<f64>] {
        &self.covariances
    }

    pub fn precisions(&self) -> &[DMatrix<f64>] {
        &self.precisions
    }

    pub fn cholesky_factors(&self) -> &[DMatrix<f64>] {
        &self.chol_lower
    }

    pub fn log_dets(&self) -> &[f64] {
        &self.log_dets
    }

    /// Volume/shape/orientation decomposition of every component.
    pub fn covariance_specs(&self) -> Result<Vec<CovarianceSpec>> {
        self.covariances.iter().map(decompose_covariance).collect()
    }

    /// Same parameters with the means shifted by `shift`.
    pub fn translated(&self, shift: &DVector<f64>) -> Result<Self> {
        let means = self.means.iter().map(|m| m + shift).collect();
        Self::new(self.weights.clone(), means, self.covariances.clone(), self.model)
    }

    pub(crate) fn flat_prec(&self) -> &[f64] {
        &self.flat_prec
    }

    pub(crate) fn flat_prec_mean(&self) -> &[f64] {
        &self.flat_prec_mean
    }

    pub(crate) fn check_dim(&self, points: &DMatrix<f64>) -> Result<()> {
        if points.ncols() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                found: points.ncols(),
            });
        }
        Ok(())
    }

    /// `log π_k + log φ(x; μ_k, Σ_k)` for every component, written to `out`.
    pub(crate) fn log_terms(&self, x: &[f64], out: &mut [f64]) {
        let d = self.d;
        let mut y = [0.0f64; 16];
        let mut heap;
        let y: &mut [f64] = if d <= 16 {
            &mut y[..d]
        } else {
            heap = vec![0.0; d];
            &mut heap
        };
        for (k, o) in out.iter_mut().enumerate() {
            let mu = &self.flat_means[k * d..(k + 1) * d];
            let l = &self.flat_chol[k * d * d..(k + 1) * d * d];
            // forward substitution L y = x - μ
            let mut maha = 0.0;
            for r in 0..d {
                let mut s = x[r] - mu[r];
                for c in 0..r {
                    s -= l[r * d + c] * y[c];
                }
                let v = s / l[r * d + r];
                y[r] = v;
                maha += v * v;
            }
            *o = self.log_norm[k] - 0.5 * maha;
        }
    }

    pub(crate) fn log_density_row(&self, x: &[f64]) -> f64 {
        let mut terms = vec![0.0; self.n_components()];
        self.log_terms(x, &mut terms);
        log_sum_exp(&terms)
    }

    /// Posterior probabilities for one point, written to `z`; returns `log f(x)`.
    pub(crate) fn posterior_row(&self, row: usize, x: &[f64], z: &mut [f64]) -> Result<f64> {
        self.log_terms(x, z);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::Underflow { row });
        }
        let mut sum = 0.0;
        for v in z.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in z.iter_mut() {
            *v /= sum;
        }
        Ok(max + sum.ln())
    }

    /// Posteriors for a row-major block of points.
    pub(crate) fn posteriors_rows(&self, rows: &[f64], z: &mut [f64]) -> Result<()> {
        let (d, g) = (self.d, self.n_components());
        let chunk = PAR_CHUNK;
        rows.par_chunks(chunk * d)
            .zip(z.par_chunks_mut(chunk * g))
            .enumerate()
            .try_for_each(|(c, (xs, zs))| {
                for (i, (x, zr)) in xs.chunks_exact(d).zip(zs.chunks_exact_mut(g)).enumerate() {
                    self.posterior_row(c * chunk + i, x, zr)?;
                }
                Ok(())
            })
    }

    pub(crate) fn log_density_rows(&self, rows: &[f64]) -> Vec<f64> {
        let d = self.d;
        let mut out = vec![0.0; rows.len() / d];
        out.par_chunks_mut(PAR_CHUNK)
            .zip(rows.par_chunks(PAR_CHUNK * d))
            .for_each(|(o, xs)| {
                let mut terms = vec![0.0; self.n_components()];
                for (v, x) in o.iter_mut().zip(xs.chunks_exact(d)) {
                    self.log_terms(x, &mut terms);
                    *v = log_sum_exp(&terms);
                }
            });
        out
    }

    /// `log f(x_i)` for every row of an `n x d` matrix.
    pub fn log_density(&self, points: &DMatrix<f64>) -> Result<DVector<f64>> {
        self.check_dim(points)?;
        Ok(DVector::from_vec(self.log_density_rows(&to_rows(points))))
    }

    /// `log f(x)` for a single point.
    pub fn log_density_at(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                found: x.len(),
            });
        }
        Ok(self.log_density_row(x.as_slice()))
    }

    pub fn component_posteriors(&self, points: &DMatrix<f64>) -> Result<Responsibilities> {
        self.check_dim(points)?;
        let g = self.n_components();
        let rows = to_rows(points);
        let mut z = vec![0.0; points.nrows() * g];
        self.posteriors_rows(&rows, &mut z)?;
        Ok(Responsibilities {
            n: points.nrows(),
            g,
            z,
        })
    }

    /// Mixture mean and covariance.
    pub fn marginal_moments(&self) -> (DVector<f64>, DMatrix<f64>) {
        let d = self.d;
        let mut mean = DVector::zeros(d);
        for (w, mu) in self.weights.iter().zip(&self.means) {
            mean += mu * *w;
        }
        let mut cov = DMatrix::zeros(d, d);
        for ((w, mu), sigma) in self.weights.iter().zip(&self.means).zip(&self.covariances) {
            let diff = mu - &mean;
            cov += sigma * *w + (&diff * diff.transpose()) * *w;
        }
        symmetrize(&mut cov);
        (mean, cov)
    }

    /// MAP component index (0-based) for each point; ties go to the lowest index.
    pub fn map_component_labels(&self, points: &DMatrix<f64>) -> Result<Vec<usize>> {
        let z = self.component_posteriors(points)?;
        Ok((0..z.n_points()).map(|i| argmax(z.row(i))).collect())
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = k;
        }
    }
    best
}

/// Row-stochastic `n x G` matrix of component posteriors `z_ik`.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    n: usize,
    g: usize,
    z: Vec<f64>,
}

impl Responsibilities {
    /// Wraps an `n x G` matrix after checking every row sums to one.
    pub fn from_matrix(z: &DMatrix<f64>) -> Result<Self> {
        let (n, g) = z.shape();
        let rows = to_rows(z);
        for (i, r) in rows.chunks_exact(g.max(1)).enumerate() {
            if r.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
                return Err(Error::validation(
                    format!("z[{i}]"),
                    "entries must be finite and non-negative",
                ));
            }
            let s: f64 = r.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::validation(format!("z[{i}]"), format!("row sums to {s}")));
            }
        }
        Ok(Self { n, g, z: rows })
    }

    pub fn n_points(&self) -> usize {
        self.n
    }

    pub fn n_components(&self) -> usize {
        self.g
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.z[i * self.g..(i + 1) * self.g]
    }

    pub(crate) fn as_rows(&self) -> &[f64] {
        &self.z
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        from_rows(self.n, self.g, &self.z)
    }
}
