//! Workloads shared by the benchmarks.

use modalem::synth::{random_mixture, rng_from_seed, sample_mixture};
use modalem::{GaussianMixture, Responsibilities};
use nalgebra::DMatrix;

/// A random `g`-component mixture in `d` dimensions with `n` points drawn
/// from it.
pub fn workload(n: usize, g: usize, d: usize, seed: u64) -> (GaussianMixture, DMatrix<f64>) {
    let mut rng = rng_from_seed(seed);
    let mixture = random_mixture(&mut rng, g, d);
    let x = sample_mixture(&mixture, n, &mut rng).data;
    (mixture, x)
}

/// Posteriors at the sampled points, the input of one M-step.
pub fn responsibilities(mixture: &GaussianMixture, x: &DMatrix<f64>) -> Responsibilities {
    mixture
        .component_posteriors(x)
        .expect("sampled points have finite density")
}
