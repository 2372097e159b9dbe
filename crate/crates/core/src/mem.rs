//! Modal EM: hill-climbing every starting point on a fixed Gaussian mixture.
//!
//! Each iteration computes component posteriors at the current positions
//! (E-step) and moves every point to the maximizer of
//! `Q(x) = Σ_k z_k log φ(x; μ_k, Σ_k)`, which is
//! `x* = (Σ_k z_k Σ_k⁻¹)⁻¹ Σ_k z_k Σ_k⁻¹ μ_k`. The batched M-step accumulates
//! the per-point `d x d` systems for all points in a single sweep over the
//! components and then solves them independently.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::cholesky_solve_in_place;
use crate::mixture::{from_rows, to_rows, GaussianMixture, Responsibilities};

const PAR_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemConfig {
    /// Relative per-coordinate change below which a point is frozen.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Use the step-size schedule `ω_t = 1 - exp(-β t)`; otherwise `ω = 1`.
    pub damping: bool,
    pub damping_rate: f64,
    pub record_paths: bool,
}

impl Default for MemConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-5,
            max_iterations: 1000,
            damping: true,
            damping_rate: 0.1,
            record_paths: false,
        }
    }
}

impl MemConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::validation(
                "tolerance",
                format!("must be > 0, got {}", self.tolerance),
            ));
        }
        if !(self.damping_rate > 0.0 && self.damping_rate.is_finite()) {
            return Err(Error::validation(
                "damping_rate",
                format!("must be > 0, got {}", self.damping_rate),
            ));
        }
        if self.max_iterations == 0 {
            return Err(Error::validation("max_iterations", "must be at least 1"));
        }
        Ok(())
    }

    fn step_weight(&self, t: usize) -> f64 {
        if self.damping {
            damping_weight(t, self.damping_rate)
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone)]
pub struct MemResult {
    /// Final position of every starting point (`n x d`).
    pub converged_points: DMatrix<f64>,
    /// Global iteration count at termination.
    pub iterations: usize,
    /// Iteration at which each point was frozen; `None` if it never converged.
    pub converged_at: Vec<Option<usize>>,
    /// Positions after each iteration, starting with the inputs at `t = 0`.
    pub paths: Option<Vec<DMatrix<f64>>>,
    pub final_log_density: DVector<f64>,
    /// Indices still moving when `max_iterations` was reached.
    pub unconverged: Vec<usize>,
}

impl MemResult {
    pub fn converged(&self) -> bool {
        self.unconverged.is_empty()
    }
}

/// Step size `1 - exp(-rate * t)` for iteration `t >= 1`.
pub fn damping_weight(t: usize, rate: f64) -> f64 {
    -(-rate * t as f64).exp_m1()
}

/// Gradient of `Q` at `x` for fixed posteriors: `-Σ_k z_k Σ_k⁻¹ (x - μ_k)`.
pub fn q_gradient(mixture: &GaussianMixture, z_row: &[f64], x: &DVector<f64>) -> DVector<f64> {
    let mut grad = DVector::zeros(mixture.dim());
    for ((z, p), mu) in z_row.iter().zip(mixture.precisions()).zip(mixture.means()) {
        grad += p * (mu - x) * *z;
    }
    grad
}

/// Per-point M-step built directly from the closed form.
///
/// This is the straightforward route: it forms the accumulated precision and
/// right-hand side for one point and factorizes it with a general Cholesky.
pub fn m_step_reference(mixture: &GaussianMixture, z_row: &[f64]) -> Result<DVector<f64>> {
    let g = mixture.n_components();
    if z_row.len() != g {
        return Err(Error::DimensionMismatch {
            expected: g,
            found: z_row.len(),
        });
    }
    let d = mixture.dim();
    let mut a = DMatrix::zeros(d, d);
    let mut b = DVector::zeros(d);
    for ((z, p), mu) in z_row.iter().zip(mixture.precisions()).zip(mixture.means()) {
        a += p * *z;
        b += (p * mu) * *z;
    }
    let chol = a.cholesky().ok_or(Error::MStepNotPositiveDefinite { row: 0 })?;
    Ok(chol.solve(&b))
}

/// Batched M-step over row-major posteriors; `ids` maps local rows to the
/// caller's point indices for error reporting.
fn m_step_rows(mixture: &GaussianMixture, z: &[f64], ids: &[usize]) -> Result<Vec<f64>> {
    let (d, g) = (mixture.dim(), mixture.n_components());
    let m = z.len() / g;
    let dd = d * d;
    let prec = mixture.flat_prec();
    let prec_mean = mixture.flat_prec_mean();
    let mut out = vec![0.0; m * d];
    out.par_chunks_mut(PAR_CHUNK * d)
        .zip(z.par_chunks(PAR_CHUNK * g))
        .enumerate()
        .try_for_each(|(c, (xs, zs))| {
            let rows = zs.len() / g;
            // A and b blocks for this chunk, accumulated component by component
            let mut a = vec![0.0; rows * dd];
            for k in 0..g {
                let pk = &prec[k * dd..(k + 1) * dd];
                let bk = &prec_mean[k * d..(k + 1) * d];
                for i in 0..rows {
                    let w = zs[i * g + k];
                    if w == 0.0 {
                        continue;
                    }
                    for (acc, p) in a[i * dd..(i + 1) * dd].iter_mut().zip(pk) {
                        *acc += w * p;
                    }
                    for (acc, p) in xs[i * d..(i + 1) * d].iter_mut().zip(bk) {
                        *acc += w * p;
                    }
                }
            }
            for i in 0..rows {
                if !cholesky_solve_in_place(&mut a[i * dd..(i + 1) * dd], &mut xs[i * d..(i + 1) * d], d) {
                    return Err(Error::MStepNotPositiveDefinite {
                        row: ids[c * PAR_CHUNK + i],
                    });
                }
            }
            Ok(())
        })?;
    Ok(out)
}

/// M-step for every row of `z` at once.
pub fn m_step_batched(mixture: &GaussianMixture, z: &Responsibilities) -> Result<DMatrix<f64>> {
    if z.n_components() != mixture.n_components() {
        return Err(Error::DimensionMismatch {
            expected: mixture.n_components(),
            found: z.n_components(),
        });
    }
    let ids: Vec<usize> = (0..z.n_points()).collect();
    let rows = m_step_rows(mixture, z.as_rows(), &ids)?;
    Ok(from_rows(z.n_points(), mixture.dim(), &rows))
}

/// One damped update of the row-major positions `x` (rows named by `ids`).
fn step_rows(mixture: &GaussianMixture, x: &[f64], ids: &[usize], t: usize, config: &MemConfig) -> Result<Vec<f64>> {
    let g = mixture.n_components();
    let mut z = vec![0.0; ids.len() * g];
    mixture.posteriors_rows(x, &mut z).map_err(|e| match e {
        Error::Underflow { row } => Error::Underflow { row: ids[row] },
        other => other,
    })?;
    let mut target = m_step_rows(mixture, &z, ids)?;
    let w = config.step_weight(t);
    if w < 1.0 {
        for (new, &old) in target.iter_mut().zip(x) {
            *new = (1.0 - w) * old + w * *new;
        }
    }
    Ok(target)
}

/// A single MEM iteration applied to every row of `x`.
pub fn mem_step(mixture: &GaussianMixture, x: &DMatrix<f64>, t: usize, config: &MemConfig) -> Result<DMatrix<f64>> {
    mixture.check_dim(x)?;
    if t == 0 {
        return Err(Error::validation("t", "iteration index starts at 1"));
    }
    let ids: Vec<usize> = (0..x.nrows()).collect();
    let rows = step_rows(mixture, &to_rows(x), &ids, t, config)?;
    Ok(from_rows(x.nrows(), x.ncols(), &rows))
}

fn relative_change(new: &[f64], old: &[f64]) -> f64 {
    new.iter()
        .zip(old)
        .map(|(a, b)| (a - b).abs() / (1.0 + b.abs()))
        .fold(0.0, f64::max)
}

fn check_start(mixture: &GaussianMixture, x0: &DMatrix<f64>, config: &MemConfig) -> Result<()> {
    config.validate()?;
    mixture.check_dim(x0)?;
    if let Some(i) = (0..x0.nrows()).find(|&i| x0.row(i).iter().any(|v| !v.is_finite())) {
        return Err(Error::validation(format!("x0[{i}]"), "non-finite starting point"));
    }
    Ok(())
}

/// Runs MEM from every row of `x0` simultaneously.
///
/// Points whose relative change drops below the tolerance are frozen and
/// leave the active set; the loop stops once every point is frozen or the
/// iteration cap is hit. Hitting the cap is reported through
/// [`MemResult::unconverged`], not as an error.
pub fn run_mem(mixture: &GaussianMixture, x0: &DMatrix<f64>, config: &MemConfig) -> Result<MemResult> {
    check_start(mixture, x0, config)?;
    let (n, d) = x0.shape();
    let mut state = to_rows(x0);
    let mut active: Vec<usize> = (0..n).collect();
    let mut converged_at = vec![None; n];
    let mut paths = config.record_paths.then(|| vec![x0.clone()]);
    let mut t = 0;
    let mut buf = Vec::with_capacity(n * d);

    while !active.is_empty() && t < config.max_iterations {
        t += 1;
        buf.clear();
        for &i in &active {
            buf.extend_from_slice(&state[i * d..(i + 1) * d]);
        }
        let next = step_rows(mixture, &buf, &active, t, config)?;
        active.retain({
            let mut local = 0;
            let state = &mut state;
            let converged_at = &mut converged_at;
            move |&i| {
                let new = &next[local * d..(local + 1) * d];
                let change = relative_change(new, &state[i * d..(i + 1) * d]);
                state[i * d..(i + 1) * d].copy_from_slice(new);
                local += 1;
                if change < config.tolerance {
                    converged_at[i] = Some(t);
                    false
                } else {
                    true
                }
            }
        });
        if let Some(p) = paths.as_mut() {
            p.push(from_rows(n, d, &state));
        }
    }

    let final_log_density = DVector::from_vec(mixture.log_density_rows(&state));
    Ok(MemResult {
        converged_points: from_rows(n, d, &state),
        iterations: t,
        converged_at,
        paths,
        final_log_density,
        unconverged: active,
    })
}

/// Posteriors at one point via plain vector algebra.
fn posterior_naive(mixture: &GaussianMixture, x: &DVector<f64>) -> Vec<f64> {
    let d = mixture.dim() as f64;
    let log_terms: Vec<f64> = (0..mixture.n_components())
        .map(|k| {
            let diff = x - &mixture.means()[k];
            let maha = diff.dot(&(&mixture.precisions()[k] * &diff));
            mixture.weights()[k].ln() - 0.5 * (d * (2.0 * std::f64::consts::PI).ln() + mixture.log_dets()[k] + maha)
        })
        .collect();
    let lse = crate::mixture::log_sum_exp(&log_terms);
    log_terms.iter().map(|l| (l - lse).exp()).collect()
}

/// Baseline that runs MEM one point at a time with per-point E- and M-steps
/// ([`m_step_reference`]). Same iteration as [`run_mem`]; kept for
/// equivalence checks and speed comparisons. Paths are not recorded.
pub fn run_mem_per_point(mixture: &GaussianMixture, x0: &DMatrix<f64>, config: &MemConfig) -> Result<MemResult> {
    check_start(mixture, x0, config)?;
    let (n, d) = x0.shape();
    let mut out = DMatrix::zeros(n, d);
    let mut converged_at = vec![None; n];
    let mut unconverged = Vec::new();
    let mut iterations = 0;
    for i in 0..n {
        let mut x = x0.row(i).transpose();
        let mut done = None;
        let mut t = 0;
        while t < config.max_iterations {
            t += 1;
            let z = posterior_naive(mixture, &x);
            let target = m_step_reference(mixture, &z).map_err(|_| Error::MStepNotPositiveDefinite { row: i })?;
            let w = config.step_weight(t);
            let next = &x * (1.0 - w) + target * w;
            let change = relative_change(next.as_slice(), x.as_slice());
            x = next;
            if change < config.tolerance {
                done = Some(t);
                break;
            }
        }
        iterations = iterations.max(t);
        match done {
            Some(_) => converged_at[i] = done,
            None => unconverged.push(i),
        }
        out.set_row(i, &x.transpose());
    }
    let final_log_density = mixture.log_density(&out)?;
    Ok(MemResult {
        converged_points: out,
        iterations,
        converged_at,
        paths: None,
        final_log_density,
        unconverged,
    })
}

/// `∇ log f(x) = Σ_k z_k(x) Σ_k⁻¹ (μ_k - x)`.
pub fn log_density_gradient(mixture: &GaussianMixture, x: &DVector<f64>) -> Result<DVector<f64>> {
    if x.len() != mixture.dim() {
        return Err(Error::DimensionMismatch {
            expected: mixture.dim(),
            found: x.len(),
        });
    }
    let mut z = vec![0.0; mixture.n_components()];
    mixture.posterior_row(0, x.as_slice(), &mut z)?;
    Ok(q_gradient(mixture, &z, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::ModelName;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn mix1d(weights: &[f64], means: &[f64], vars: &[f64]) -> GaussianMixture {
        GaussianMixture::new(
            weights.to_vec(),
            means.iter().map(|&m| DVector::from_element(1, m)).collect(),
            vars.iter().map(|&v| DMatrix::from_element(1, 1, v)).collect(),
            ModelName::Free,
        )
        .unwrap()
    }

    fn random_mixture(rng: &mut ChaCha20Rng, g: usize, d: usize, spread: f64) -> GaussianMixture {
        let raw: Vec<f64> = (0..g).map(|_| rng.random_range(0.2..1.0)).collect();
        let s: f64 = raw.iter().sum();
        let mut w: Vec<f64> = raw.iter().map(|v| v / s).collect();
        w[0] = 1.0 - w[1..].iter().sum::<f64>();
        let means = (0..g)
            .map(|_| DVector::from_fn(d, |_, _| rng.random_range(-spread..spread)))
            .collect();
        let covs = (0..g)
            .map(|_| {
                let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
                a.transpose() * &a + DMatrix::identity(d, d) * 0.2
            })
            .collect();
        GaussianMixture::new(w, means, covs, ModelName::VVV).unwrap()
    }

    #[test]
    fn damping_schedule_values() {
        assert_abs_diff_eq!(damping_weight(1, 0.1), 0.095_162_581_964_040_43, epsilon = 1e-15);
        assert_abs_diff_eq!(damping_weight(10, 0.1), 0.632_120_558_828_557_7, epsilon = 1e-15);
        assert!((1.0 - damping_weight(200, 0.1)) < 1e-8);
        for t in 1..300 {
            assert!(damping_weight(t + 1, 0.1) > damping_weight(t, 0.1));
        }
    }

    #[test]
    fn reference_single_component_is_mean() {
        let m = mix1d(&[1.0], &[3.25], &[2.0]);
        assert_abs_diff_eq!(m_step_reference(&m, &[1.0]).unwrap()[0], 3.25, epsilon = 1e-15);
    }

    #[test]
    fn reference_common_covariance_is_weighted_mean() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let means = vec![
            DVector::from_vec(vec![0.0, 1.0]),
            DVector::from_vec(vec![4.0, -2.0]),
            DVector::from_vec(vec![1.0, 5.0]),
        ];
        let m = GaussianMixture::new(vec![0.2, 0.5, 0.3], means.clone(), vec![cov; 3], ModelName::EEE).unwrap();
        let z = [0.1, 0.6, 0.3];
        let expected = &means[0] * z[0] + &means[1] * z[1] + &means[2] * z[2];
        assert_abs_diff_eq!(m_step_reference(&m, &z).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn reference_hand_example() {
        let m = mix1d(&[0.5, 0.5], &[0.0, 4.0], &[1.0, 4.0]);
        let x = m_step_reference(&m, &[0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(x[0], 0.8, epsilon = 1e-15);
        assert!(q_gradient(&m, &[0.5, 0.5], &x).norm() < 1e-14);
    }

    #[test]
    fn reference_zeroes_q_gradient() {
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        for trial in 0..40 {
            let d = 1 + trial % 5;
            let g = 1 + trial % 6;
            let m = random_mixture(&mut rng, g, d, 4.0);
            let raw: Vec<f64> = (0..g).map(|_| rng.random_range(0.01..1.0)).collect();
            let s: f64 = raw.iter().sum();
            let z: Vec<f64> = raw.iter().map(|v| v / s).collect();
            let x = m_step_reference(&m, &z).unwrap();
            assert!(q_gradient(&m, &z, &x).norm() < 1e-8 * (1.0 + x.norm()));
        }
    }

    #[test]
    fn batched_matches_reference() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let m = random_mixture(&mut rng, 4, 3, 4.0);
        let pts = DMatrix::from_fn(100, 3, |_, _| rng.random_range(-6.0..6.0));
        let z = m.component_posteriors(&pts).unwrap();
        let batched = m_step_batched(&m, &z).unwrap();
        for i in 0..100 {
            let r = m_step_reference(&m, z.row(i)).unwrap();
            for j in 0..3 {
                assert!((batched[(i, j)] - r[j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn batched_of_one_and_duplicates() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let m = random_mixture(&mut rng, 3, 2, 3.0);
        let pt = DMatrix::from_row_slice(1, 2, &[0.7, -1.1]);
        let z = m.component_posteriors(&pt).unwrap();
        let one = m_step_batched(&m, &z).unwrap();
        let r = m_step_reference(&m, z.row(0)).unwrap();
        assert_abs_diff_eq!(one.row(0).transpose(), r, epsilon = 1e-12);

        let dup = DMatrix::from_fn(7, 2, |_, j| pt[(0, j)]);
        let out = m_step_batched(&m, &m.component_posteriors(&dup).unwrap()).unwrap();
        for i in 1..7 {
            assert_eq!(out.row(i), out.row(0));
        }
    }

    #[test]
    fn batched_rejects_component_mismatch() {
        let m = mix1d(&[0.5, 0.5], &[0.0, 1.0], &[1.0, 1.0]);
        let z = Responsibilities::from_matrix(&DMatrix::from_element(2, 1, 1.0)).unwrap();
        assert!(matches!(m_step_batched(&m, &z), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn undamped_step_is_m_step() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let m = random_mixture(&mut rng, 3, 2, 3.0);
        let pts = DMatrix::from_fn(30, 2, |_, _| rng.random_range(-5.0..5.0));
        let cfg = MemConfig {
            damping: false,
            ..Default::default()
        };
        let stepped = mem_step(&m, &pts, 1, &cfg).unwrap();
        let direct = m_step_batched(&m, &m.component_posteriors(&pts).unwrap()).unwrap();
        assert_eq!(stepped, direct);
    }

    #[test]
    fn single_component_step_moves_toward_mean() {
        let m = GaussianMixture::new(
            vec![1.0],
            vec![DVector::from_vec(vec![1.0, 2.0])],
            vec![DMatrix::from_row_slice(2, 2, &[2.0, 0.4, 0.4, 1.0])],
            ModelName::VVV,
        )
        .unwrap();
        let pts = DMatrix::from_row_slice(3, 2, &[5.0, 5.0, -3.0, 0.0, 1.0, -4.0]);
        let cfg = MemConfig::default();
        let w = damping_weight(3, 0.1);
        let out = mem_step(&m, &pts, 3, &cfg).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                let expected = (1.0 - w) * pts[(i, j)] + w * m.means()[0][j];
                assert_abs_diff_eq!(out[(i, j)], expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn step_never_decreases_density() {
        let mut rng = ChaCha20Rng::seed_from_u64(33);
        for trial in 0..10 {
            let m = random_mixture(&mut rng, 2 + trial % 4, 2, 5.0);
            let pts = DMatrix::from_fn(50, 2, |_, _| rng.random_range(-9.0..9.0));
            let before = m.log_density(&pts).unwrap();
            for t in [1, 5, 40] {
                let out = mem_step(&m, &pts, t, &MemConfig::default()).unwrap();
                let after = m.log_density(&out).unwrap();
                for i in 0..50 {
                    assert!(after[i] >= before[i] - 1e-12);
                }
            }
        }
    }

    #[test]
    fn mem_step_rejects_t_zero() {
        let m = mix1d(&[1.0], &[0.0], &[1.0]);
        assert!(mem_step(&m, &DMatrix::zeros(1, 1), 0, &MemConfig::default()).is_err());
    }

    #[test]
    fn single_component_converges_to_mean() {
        let m = mix1d(&[1.0], &[2.0], &[0.5]);
        let x0 = DMatrix::from_column_slice(5, 1, &[-10.0, -1.0, 2.0, 3.0, 40.0]);
        let res = run_mem(&m, &x0, &MemConfig::default()).unwrap();
        assert!(res.converged());
        for i in 0..5 {
            assert!((res.converged_points[(i, 0)] - 2.0).abs() < 1e-3);
        }
    }

    // Brute-force grid search over [-5, 6] locates the single maximum at 0.5.
    #[test]
    fn symmetric_pair_has_one_mode() {
        let m = mix1d(&[0.5, 0.5], &[0.0, 1.0], &[1.0, 1.0]);
        let grid: Vec<f64> = (0..=110_000).map(|i| -5.0 + i as f64 * 1e-4).collect();
        let dens = m
            .log_density(&DMatrix::from_column_slice(grid.len(), 1, &grid))
            .unwrap();
        let local_max: Vec<f64> = (1..grid.len() - 1)
            .filter(|&i| dens[i] >= dens[i - 1] && dens[i] >= dens[i + 1])
            .map(|i| grid[i])
            .collect();
        assert_eq!(local_max.len(), 1);
        assert!((local_max[0] - 0.5).abs() < 1e-4);

        let starts: Vec<f64> = (0..=14).map(|i| -3.0 + 0.5 * i as f64).collect();
        let res = run_mem(&m, &DMatrix::from_column_slice(15, 1, &starts), &MemConfig::default()).unwrap();
        assert!(res.converged());
        for i in 0..15 {
            assert!((res.converged_points[(i, 0)] - 0.5).abs() < 1e-3);
        }
        let g = log_density_gradient(&m, &DVector::from_element(1, 0.5)).unwrap();
        assert!(g[0].abs() < 1e-12);
    }

    #[test]
    fn well_separated_means_are_near_fixed_points() {
        let means = vec![
            DVector::from_vec(vec![0.0, 0.0]),
            DVector::from_vec(vec![20.0, 0.0]),
            DVector::from_vec(vec![0.0, 20.0]),
        ];
        let covs = vec![
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(2, 2, &[1.5, 0.3, 0.3, 0.8]),
            DMatrix::identity(2, 2) * 0.5,
        ];
        let m = GaussianMixture::new(vec![0.3, 0.3, 0.4], means.clone(), covs, ModelName::VVV).unwrap();
        let x0 = DMatrix::from_fn(3, 2, |i, j| means[i][j]);
        let res = run_mem(&m, &x0, &MemConfig::default()).unwrap();
        assert!(res.converged());
        assert!(res.iterations <= 3);
        for i in 0..3 {
            let x = res.converged_points.row(i).transpose();
            assert!((&x - &means[i]).norm() < 1e-3);
            assert!(log_density_gradient(&m, &x).unwrap().norm() < 1e-4);
        }
    }

    #[test]
    fn iteration_cap_reports_unconverged() {
        let m = mix1d(&[0.5, 0.5], &[0.0, 1.0], &[1.0, 1.0]);
        let cfg = MemConfig {
            max_iterations: 2,
            ..Default::default()
        };
        let res = run_mem(&m, &DMatrix::from_column_slice(2, 1, &[-3.0, 4.0]), &cfg).unwrap();
        assert_eq!(res.iterations, 2);
        assert_eq!(res.unconverged, vec![0, 1]);
        assert!(res.converged_at.iter().all(Option::is_none));
    }

    #[test]
    fn paths_start_at_inputs() {
        let m = mix1d(&[1.0], &[0.0], &[1.0]);
        let x0 = DMatrix::from_column_slice(2, 1, &[1.0, -2.0]);
        let cfg = MemConfig {
            record_paths: true,
            ..Default::default()
        };
        let res = run_mem(&m, &x0, &cfg).unwrap();
        let paths = res.paths.unwrap();
        assert_eq!(paths.len(), res.iterations + 1);
        assert_eq!(paths[0], x0);
        assert_eq!(paths.last().unwrap(), &res.converged_points);
    }

    #[test]
    fn invalid_config_rejected() {
        let m = mix1d(&[1.0], &[0.0], &[1.0]);
        let x0 = DMatrix::zeros(1, 1);
        for cfg in [
            MemConfig {
                tolerance: 0.0,
                ..Default::default()
            },
            MemConfig {
                damping_rate: -1.0,
                ..Default::default()
            },
            MemConfig {
                max_iterations: 0,
                ..Default::default()
            },
        ] {
            assert!(matches!(run_mem(&m, &x0, &cfg), Err(Error::Validation { .. })));
        }
        let bad = DMatrix::from_element(1, 1, f64::NAN);
        assert!(run_mem(&m, &bad, &MemConfig::default()).is_err());
    }

    #[test]
    fn per_point_baseline_agrees() {
        let mut rng = ChaCha20Rng::seed_from_u64(77);
        let m = random_mixture(&mut rng, 4, 2, 4.0);
        let x0 = DMatrix::from_fn(60, 2, |_, _| rng.random_range(-6.0..6.0));
        let cfg = MemConfig::default();
        let a = run_mem(&m, &x0, &cfg).unwrap();
        let b = run_mem_per_point(&m, &x0, &cfg).unwrap();
        assert_eq!(a.iterations, b.iterations);
        assert_eq!(a.converged_at, b.converged_at);
        assert!((&a.converged_points - &b.converged_points).amax() < 1e-9);
    }

    #[test]
    fn translation_equivariance() {
        let mut rng = ChaCha20Rng::seed_from_u64(15);
        let m = random_mixture(&mut rng, 3, 2, 4.0);
        let shift = DVector::from_vec(vec![7.5, -3.25]);
        let moved = m.translated(&shift).unwrap();
        let x0 = DMatrix::from_fn(40, 2, |_, _| rng.random_range(-6.0..6.0));
        let mut x0s = x0.clone();
        for i in 0..40 {
            for j in 0..2 {
                x0s[(i, j)] += shift[j];
            }
        }
        // tight tolerance so both runs reach the fixed point itself
        let cfg = MemConfig {
            tolerance: 1e-13,
            damping: false,
            ..Default::default()
        };
        let a = run_mem(&m, &x0, &cfg).unwrap();
        let b = run_mem(&moved, &x0s, &cfg).unwrap();
        for i in 0..40 {
            for j in 0..2 {
                assert!((a.converged_points[(i, j)] + shift[j] - b.converged_points[(i, j)]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        for trial in 0..30 {
            let d = 1 + trial % 4;
            let m = random_mixture(&mut rng, 1 + trial % 5, d, 3.0);
            let x = DVector::from_fn(d, |_, _| rng.random_range(-4.0..4.0));
            let g = log_density_gradient(&m, &x).unwrap();
            let h = 1e-5;
            for j in 0..d {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let fd = (m.log_density_at(&xp).unwrap() - m.log_density_at(&xm).unwrap()) / (2.0 * h);
                assert!((fd - g[j]).abs() <= 1e-6 * g[j].abs().max(1.0));
            }
        }
    }

    #[test]
    fn gradient_zero_at_single_mean() {
        let m = mix1d(&[1.0], &[1.5], &[2.0]);
        assert_eq!(
            log_density_gradient(&m, &DVector::from_element(1, 1.5)).unwrap()[0],
            0.0
        );
    }
}
