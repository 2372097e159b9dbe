//! Seeded synthetic data. Streams come from ChaCha20 seeded with a `u64`,
//! so a seed reproduces the same sample on every platform.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::mixture::{GaussianMixture, ModelName};

/// Points with the index of the component that generated each one.
#[derive(Debug, Clone)]
pub struct Sample {
    pub data: DMatrix<f64>,
    pub labels: Vec<usize>,
}

pub fn rng_from_seed(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn standard_normal_vec<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample(StandardNormal))
}

/// Multivariate skew-normal with location `xi`, scale matrix `omega` and
/// shape (skewness) vector `shape`.
#[derive(Debug, Clone)]
pub struct SkewNormal {
    location: DVector<f64>,
    scale_sd: DVector<f64>,
    delta: DVector<f64>,
    residual_chol: DMatrix<f64>,
}

impl SkewNormal {
    pub fn new(location: DVector<f64>, omega: DMatrix<f64>, shape: DVector<f64>) -> Result<Self> {
        let d = location.len();
        if omega.shape() != (d, d) || shape.len() != d {
            return Err(Error::validation("skew_normal", "inconsistent dimensions"));
        }
        let scale_sd = omega.diagonal().map(f64::sqrt);
        let corr = DMatrix::from_fn(d, d, |i, j| omega[(i, j)] / (scale_sd[i] * scale_sd[j]));
        let ca = &corr * &shape;
        let delta = &ca / (1.0 + shape.dot(&ca)).sqrt();
        let residual = &corr - &delta * delta.transpose();
        let residual_chol = residual
            .cholesky()
            .ok_or(Error::NotPositiveDefinite {
                context: "skew-normal scale".into(),
            })?
            .l();
        Ok(Self {
            location,
            scale_sd,
            delta,
            residual_chol,
        })
    }

    /// `ξ + ω (δ |U₀| + U₁)` with `U₀ ~ N(0, 1)` and `U₁ ~ N(0, Ω̄ - δδᵀ)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let d = self.location.len();
        let half: f64 = rng.sample::<f64, _>(StandardNormal).abs();
        let z = &self.delta * half + &self.residual_chol * standard_normal_vec(rng, d);
        &self.location + z.component_mul(&self.scale_sd)
    }

    pub fn mean(&self) -> DVector<f64> {
        &self.location + (&self.delta * (2.0 / std::f64::consts::PI).sqrt()).component_mul(&self.scale_sd)
    }
}

/// Two-component bivariate example: weight 1/3 on `N([5, -2], I)` and 2/3 on
/// a skew-normal at the origin with scale `[[1, .5], [.5, 1]]` and shape `skew`.
pub fn gauss_skewnormal(n: usize, seed: u64, skew: [f64; 2]) -> Result<Sample> {
    let gaussian_mean = DVector::from_vec(vec![5.0, -2.0]);
    let skewed = SkewNormal::new(
        DVector::zeros(2),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]),
        DVector::from_column_slice(&skew),
    )?;
    let mut rng = rng_from_seed(seed);
    let mut data = DMatrix::zeros(n, 2);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let (row, label) = if rng.random::<f64>() < 1.0 / 3.0 {
            (&gaussian_mean + standard_normal_vec(&mut rng, 2), 0)
        } else {
            (skewed.sample(&mut rng), 1)
        };
        data.set_row(i, &row.transpose());
        labels.push(label);
    }
    Ok(Sample { data, labels })
}

/// Draws `n` points from a Gaussian mixture.
pub fn sample_mixture<R: Rng + ?Sized>(mixture: &GaussianMixture, n: usize, rng: &mut R) -> Sample {
    let d = mixture.dim();
    let mut data = DMatrix::zeros(n, d);
    let mut labels = Vec::with_capacity(n);
    let cum: Vec<f64> = mixture
        .weights()
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    for i in 0..n {
        let u: f64 = rng.random();
        let k = cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1);
        let x = &mixture.means()[k] + &mixture.cholesky_factors()[k] * standard_normal_vec(rng, d);
        data.set_row(i, &x.transpose());
        labels.push(k);
    }
    Sample { data, labels }
}

/// Random SPD matrix with eigenvalues drawn from `[lo, hi]` and a random
/// orientation.
pub fn random_covariance<R: Rng + ?Sized>(rng: &mut R, d: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = a.qr().q();
    let eig = DVector::from_fn(d, |_, _| rng.random_range(lo..=hi));
    let mut s = &q * DMatrix::from_diagonal(&eig) * q.transpose();
    crate::mixture::symmetrize(&mut s);
    s
}

/// Random `FREE` mixture: weights bounded away from zero, means spread over
/// a few standard deviations, covariance eigenvalues in `[0.3, 2]`.
pub fn random_mixture<R: Rng + ?Sized>(rng: &mut R, g: usize, d: usize) -> GaussianMixture {
    let raw: Vec<f64> = (0..g).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let drift: f64 = 1.0 - weights.iter().sum::<f64>();
    weights[0] += drift;
    let means = (0..g).map(|_| standard_normal_vec(rng, d) * 3.0).collect();
    let covs = (0..g).map(|_| random_covariance(rng, d, 0.3, 2.0)).collect();
    GaussianMixture::new(weights, means, covs, ModelName::Free).expect("random mixture is valid")
}

/// `g` Gaussian components in `d` dimensions whose means are pairwise at
/// least `sep` times the largest component standard deviation apart, with a
/// sample of `n` points.
pub fn separated_gaussians(g: usize, d: usize, sep: f64, n: usize, seed: u64) -> Result<(GaussianMixture, Sample)> {
    if g == 0 || d == 0 {
        return Err(Error::validation("separated_gaussians", "need g >= 1 and d >= 1"));
    }
    let mut rng = rng_from_seed(seed);
    let covs: Vec<DMatrix<f64>> = (0..g).map(|_| random_covariance(&mut rng, d, 0.5, 1.5)).collect();
    let max_sd = covs
        .iter()
        .map(|c| nalgebra::SymmetricEigen::new(c.clone()).eigenvalues.max().sqrt())
        .fold(0.0, f64::max);
    let min_dist = sep * max_sd;
    let side = min_dist * (g as f64).powf(1.0 / d as f64) * 2.0;
    let mut means: Vec<DVector<f64>> = Vec::with_capacity(g);
    let mut attempts = 0;
    while means.len() < g {
        attempts += 1;
        if attempts > 100_000 {
            return Err(Error::validation("separated_gaussians", "could not place means"));
        }
        let cand = DVector::from_fn(d, |_, _| rng.random_range(0.0..side));
        if means.iter().all(|m| (m - &cand).norm() >= min_dist) {
            means.push(cand);
        }
    }
    let raw: Vec<f64> = (0..g).map(|_| rng.random_range(0.5..1.5)).collect();
    let total: f64 = raw.iter().sum();
    let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    weights[0] = 1.0 - weights[1..].iter().sum::<f64>();
    let mixture = GaussianMixture::new(weights, means, covs, ModelName::VVV)?;
    let sample = sample_mixture(&mixture, n, &mut rng);
    Ok((mixture, sample))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn motivating_sample_proportions() {
        let n = 500;
        let s = gauss_skewnormal(n, 3, [5.0, 1.0]).unwrap();
        assert_eq!(s.data.nrows(), n);
        let first = s.labels.iter().filter(|&&l| l == 0).count() as f64;
        let expected = n as f64 / 3.0;
        let sd = (n as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        assert!((first - expected).abs() < 3.0 * sd, "{first} vs {expected} sd {sd}");
    }

    #[test]
    fn same_seed_same_sample() {
        let a = gauss_skewnormal(100, 7, [5.0, 1.0]).unwrap();
        let b = gauss_skewnormal(100, 7, [5.0, 1.0]).unwrap();
        assert_eq!(a.data, b.data);
        assert_eq!(a.labels, b.labels);
        let c = gauss_skewnormal(100, 8, [5.0, 1.0]).unwrap();
        assert_ne!(a.data, c.data);
    }

    #[test]
    fn zero_skew_is_normal() {
        let sn = SkewNormal::new(
            DVector::from_vec(vec![1.0, -1.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]),
            DVector::zeros(2),
        )
        .unwrap();
        let mut rng = rng_from_seed(3);
        let n = 20_000;
        let mut sum = DVector::zeros(2);
        for _ in 0..n {
            sum += sn.sample(&mut rng);
        }
        let mean = sum / n as f64;
        assert!((mean[0] - 1.0).abs() < 3.0 / (n as f64).sqrt());
        assert!((mean[1] + 1.0).abs() < 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn skew_normal_mean_matches_theory() {
        let sn = SkewNormal::new(
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]),
            DVector::from_vec(vec![5.0, 1.0]),
        )
        .unwrap();
        let mut rng = rng_from_seed(4);
        let n = 40_000;
        let mut sum = DVector::zeros(2);
        for _ in 0..n {
            sum += sn.sample(&mut rng);
        }
        let mean = sum / n as f64;
        let expected = sn.mean();
        // marginal variances are below 1, so 4/√n bounds the error comfortably
        assert!((mean - expected).amax() < 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn separated_means_are_separated() {
        let (m, s) = separated_gaussians(4, 3, 10.0, 200, 5).unwrap();
        assert_eq!(s.data.shape(), (200, 3));
        for a in 0..4 {
            for b in (a + 1)..4 {
                assert!((&m.means()[a] - &m.means()[b]).norm() >= 10.0 * 0.5f64.sqrt());
            }
        }
    }
}
