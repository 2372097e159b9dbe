use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::init::{kmeans_plus_plus, lloyd};
use super::{n_parameters, FITTABLE_MODELS};
use crate::error::{Error, Result};
use crate::mixture::{symmetrize, to_rows, GaussianMixture, ModelName};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub components: Vec<usize>,
    pub models: Vec<ModelName>,
    /// Relative log-likelihood change that ends EM.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            components: (1..=9).collect(),
            models: FITTABLE_MODELS.to_vec(),
            tolerance: 1e-8,
            max_iterations: 500,
            restarts: 5,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::validation("components", "empty"));
        }
        if self.components.contains(&0) {
            return Err(Error::validation("components", "every G must be at least 1"));
        }
        if self.models.is_empty() {
            return Err(Error::validation("models", "empty"));
        }
        if let Some(m) = self.models.iter().find(|m| !FITTABLE_MODELS.contains(m)) {
            return Err(Error::UnsupportedModel(m.to_string()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::validation("tolerance", "must be > 0"));
        }
        if self.max_iterations == 0 || self.restarts == 0 {
            return Err(Error::validation("max_iterations/restarts", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub mixture: GaussianMixture,
    pub log_likelihood: f64,
    pub n_parameters: usize,
    /// `2 log L - p log n`; larger is better.
    pub bic: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Log-likelihood at every E-step of the winning restart.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelScore {
    pub model: ModelName,
    #[serde(rename = "G")]
    pub g: usize,
    pub bic: Option<f64>,
    pub log_likelihood: Option<f64>,
    pub n_parameters: usize,
    pub converged: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ModelSelection {
    pub best: FitResult,
    pub table: Vec<ModelScore>,
}

pub fn bic(log_likelihood: f64, n_parameters: usize, n: usize) -> f64 {
    2.0 * log_likelihood - n_parameters as f64 * (n as f64).ln()
}

pub fn log_likelihood(mixture: &GaussianMixture, x: &DMatrix<f64>) -> Result<f64> {
    Ok(mixture.log_density(x)?.sum())
}

struct Workspace<'a> {
    x: &'a DMatrix<f64>,
    rows: Vec<f64>,
    model: ModelName,
    g: usize,
    floor: f64,
}

impl Workspace<'_> {
    fn d(&self) -> usize {
        self.x.ncols()
    }

    fn floor_full(&self, s: &mut DMatrix<f64>) {
        symmetrize(s);
        let eig = SymmetricEigen::new(s.clone());
        if eig.eigenvalues.min() < self.floor {
            let clipped = eig.eigenvalues.map(|v| v.max(self.floor));
            *s = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
            symmetrize(s);
        }
    }

    /// Weighted MLE under the model constraint; `z` is row-major `n x G`.
    fn m_step(&self, z: &[f64]) -> Result<GaussianMixture> {
        let (n, d, g) = (self.x.nrows(), self.d(), self.g);
        let mut nk = vec![0.0; g];
        let mut means = vec![DVector::zeros(d); g];
        for i in 0..n {
            for k in 0..g {
                let w = z[i * g + k];
                nk[k] += w;
                for j in 0..d {
                    means[k][j] += w * self.rows[i * d + j];
                }
            }
        }
        for k in 0..g {
            if !(nk[k] >= (d + 1) as f64) {
                return Err(Error::FitFailed(format!(
                    "component {k} has {:.3} effective points (need at least {})",
                    nk[k],
                    d + 1
                )));
            }
            means[k] /= nk[k];
        }
        // per-component scatter matrices
        let mut scatter = vec![DMatrix::zeros(d, d); g];
        let mut diff = vec![0.0; d];
        for i in 0..n {
            for k in 0..g {
                let w = z[i * g + k];
                if w == 0.0 {
                    continue;
                }
                for j in 0..d {
                    diff[j] = self.rows[i * d + j] - means[k][j];
                }
                let s = &mut scatter[k];
                for a in 0..d {
                    for b in 0..=a {
                        s[(a, b)] += w * diff[a] * diff[b];
                    }
                }
            }
        }
        for s in scatter.iter_mut() {
            for a in 0..d {
                for b in 0..a {
                    s[(b, a)] = s[(a, b)];
                }
            }
        }
        let total: f64 = nk.iter().sum();
        let pooled = || scatter.iter().fold(DMatrix::zeros(d, d), |acc, s| acc + s) / total;
        let covs: Vec<DMatrix<f64>> = match self.model {
            ModelName::VVV => scatter
                .iter()
                .zip(&nk)
                .map(|(s, &w)| {
                    let mut c = s / w;
                    self.floor_full(&mut c);
                    c
                })
                .collect(),
            ModelName::EEE => {
                let mut c = pooled();
                self.floor_full(&mut c);
                vec![c; g]
            }
            ModelName::VVI => scatter
                .iter()
                .zip(&nk)
                .map(|(s, &w)| DMatrix::from_diagonal(&s.diagonal().map(|v| (v / w).max(self.floor))))
                .collect(),
            ModelName::EEI => {
                let c = DMatrix::from_diagonal(&pooled().diagonal().map(|v| v.max(self.floor)));
                vec![c; g]
            }
            ModelName::VII => scatter
                .iter()
                .zip(&nk)
                .map(|(s, &w)| DMatrix::identity(d, d) * (s.trace() / (d as f64 * w)).max(self.floor))
                .collect(),
            ModelName::EII => {
                let v = (pooled().trace() / d as f64).max(self.floor);
                vec![DMatrix::identity(d, d) * v; g]
            }
            other => return Err(Error::UnsupportedModel(other.to_string())),
        };
        let mut weights: Vec<f64> = nk.iter().map(|v| v / total).collect();
        let rest: f64 = weights[1..].iter().sum();
        weights[0] = 1.0 - rest;
        GaussianMixture::new(weights, means, covs, self.model).map_err(|e| Error::FitFailed(e.to_string()))
    }

    /// Posteriors and log-likelihood.
    fn e_step(&self, mixture: &GaussianMixture, z: &mut [f64]) -> Result<f64> {
        let (d, g) = (self.d(), self.g);
        let mut ll = 0.0;
        for (i, (x, zr)) in self.rows.chunks_exact(d).zip(z.chunks_exact_mut(g)).enumerate() {
            ll += mixture.posterior_row(i, x, zr)?;
        }
        Ok(ll)
    }

    fn run(&self, init_labels: &[usize], config: &FitConfig) -> Result<(GaussianMixture, f64, bool, Vec<f64>)> {
        let (n, g) = (self.x.nrows(), self.g);
        let mut z = vec![0.0; n * g];
        for (i, &l) in init_labels.iter().enumerate() {
            z[i * g + l] = 1.0;
        }
        let mut mixture = self.m_step(&z)?;
        let mut trace = Vec::new();
        let mut converged = false;
        for _ in 0..config.max_iterations {
            let ll = self.e_step(&mixture, &mut z)?;
            let prev = trace.last().copied();
            trace.push(ll);
            if let Some(p) = prev {
                if (ll - p).abs() <= config.tolerance * ll.abs() {
                    converged = true;
                    break;
                }
            }
            mixture = self.m_step(&z)?;
        }
        if !converged {
            // score the parameters produced by the last M-step
            let ll = self.e_step(&mixture, &mut z)?;
            trace.push(ll);
        }
        let ll = *trace.last().expect("at least one E-step");
        Ok((mixture, ll, converged, trace))
    }
}

fn restart_seed(seed: u64, restart: usize) -> u64 {
    seed ^ (restart as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// EM fit of one `(G, model)` pair, best of `config.restarts` k-means++ starts.
pub fn em_fit(x: &DMatrix<f64>, g: usize, model: ModelName, config: &FitConfig) -> Result<FitResult> {
    let (n, d) = x.shape();
    let n_par = n_parameters(model, g, d)?;
    if g == 0 {
        return Err(Error::validation("G", "must be at least 1"));
    }
    if n <= g * d {
        return Err(Error::FitFailed(format!("need n > G*d, got n = {n}, G*d = {}", g * d)));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("data", "non-finite value"));
    }
    let mean = x.row_mean();
    let centered = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
    let sample_trace = centered.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let ws = Workspace {
        x,
        rows: to_rows(x),
        model,
        g,
        floor: 1e-8 * sample_trace / d as f64,
    };

    let mut best: Option<(GaussianMixture, f64, bool, Vec<f64>)> = None;
    let mut last_err = None;
    for r in 0..config.restarts.max(1) {
        let mut rng = ChaCha20Rng::seed_from_u64(restart_seed(config.seed, r));
        let centers = kmeans_plus_plus(x, g, &mut rng);
        let labels = lloyd(x, centers, 20);
        match ws.run(&labels, config) {
            Ok(fit) => {
                if best.as_ref().is_none_or(|b| fit.1 > b.1) {
                    best = Some(fit);
                }
            }
            Err(e) => last_err = Some(e),
        }
        if g == 1 && best.is_some() {
            break; // a single component has one start
        }
    }
    let (mixture, ll, converged, trace) = best.ok_or_else(|| {
        Error::FitFailed(format!(
            "all restarts failed for {model} with G = {g}: {}",
            last_err.map(|e| e.to_string()).unwrap_or_default()
        ))
    })?;
    Ok(FitResult {
        bic: bic(ll, n_par, n),
        mixture,
        log_likelihood: ll,
        n_parameters: n_par,
        converged,
        iterations: trace.len(),
        trace,
    })
}

/// Fits every `(G, model)` pair and keeps the largest BIC. Exact ties go to
/// fewer parameters, then smaller `G`.
pub fn select_model(x: &DMatrix<f64>, config: &FitConfig) -> Result<ModelSelection> {
    config.validate()?;
    let d = x.ncols();
    let pairs: Vec<(usize, ModelName)> = config
        .components
        .iter()
        .flat_map(|&g| config.models.iter().map(move |&m| (g, m)))
        .collect();
    let fits: Vec<(usize, ModelName, Result<FitResult>)> = pairs
        .par_iter()
        .map(|&(g, m)| (g, m, em_fit(x, g, m, config)))
        .collect();

    let mut table = Vec::with_capacity(fits.len());
    let mut best: Option<(usize, FitResult)> = None;
    for (g, model, fit) in fits {
        let n_par = n_parameters(model, g, d)?;
        match fit {
            Ok(f) => {
                table.push(ModelScore {
                    model,
                    g,
                    bic: Some(f.bic),
                    log_likelihood: Some(f.log_likelihood),
                    n_parameters: n_par,
                    converged: Some(f.converged),
                    error: None,
                });
                let better = match &best {
                    None => true,
                    Some((bg, b)) => f.bic > b.bic || (f.bic == b.bic && (f.n_parameters, g) < (b.n_parameters, *bg)),
                };
                if better {
                    best = Some((g, f));
                }
            }
            Err(e) => table.push(ModelScore {
                model,
                g,
                bic: None,
                log_likelihood: None,
                n_parameters: n_par,
                converged: None,
                error: Some(e.to_string()),
            }),
        }
    }
    let (_, best) = best.ok_or_else(|| Error::FitFailed("every (G, model) pair failed".into()))?;
    Ok(ModelSelection { best, table })
}
