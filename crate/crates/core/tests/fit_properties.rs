use modalem::fit::{bic, log_likelihood, FITTABLE_MODELS};
use modalem::synth::{rng_from_seed, sample_mixture, separated_gaussians};
use modalem::{em_fit, select_model, FitConfig, GaussianMixture, ModelName};
use nalgebra::{DMatrix, DVector};

fn two_blobs(seed: u64) -> (DMatrix<f64>, Vec<usize>) {
    let m = GaussianMixture::new(
        vec![0.3, 0.7],
        vec![DVector::from_vec(vec![-6.0, 0.0]), DVector::from_vec(vec![6.0, 1.0])],
        vec![DMatrix::identity(2, 2), DMatrix::identity(2, 2) * 1.5],
        ModelName::VII,
    )
    .unwrap();
    let s = sample_mixture(&m, 5000, &mut rng_from_seed(seed));
    (s.data, s.labels)
}

#[test]
fn log_likelihood_never_decreases() {
    let (_, sample) = separated_gaussians(3, 2, 3.0, 400, 5).unwrap();
    let config = FitConfig {
        restarts: 2,
        ..FitConfig::default()
    };
    for model in FITTABLE_MODELS {
        for g in 1..=4 {
            let fit = em_fit(&sample.data, g, model, &config).unwrap();
            for w in fit.trace.windows(2) {
                let slack = 1e-10 * w[0].abs().max(1.0);
                assert!(w[1] >= w[0] - slack, "{model} G={g}: {} -> {}", w[0], w[1]);
            }
            let ll = log_likelihood(&fit.mixture, &sample.data).unwrap();
            assert!((ll - fit.log_likelihood).abs() <= 1e-8 * ll.abs().max(1.0));
        }
    }
}

#[test]
fn single_gaussian_mean_recovered() {
    let truth_mean = DVector::from_vec(vec![1.0, -2.0]);
    let truth_cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
    let m = GaussianMixture::new(
        vec![1.0],
        vec![truth_mean.clone()],
        vec![truth_cov.clone()],
        ModelName::VVV,
    )
    .unwrap();
    let n = 5000;
    let s = sample_mixture(&m, n, &mut rng_from_seed(17));
    let fit = em_fit(&s.data, 1, ModelName::VVV, &FitConfig::default()).unwrap();
    for j in 0..2 {
        let sd = truth_cov[(j, j)].sqrt();
        let err = (fit.mixture.means()[0][j] - truth_mean[j]).abs();
        assert!(err < 3.0 * sd / (n as f64).sqrt(), "coordinate {j} off by {err}");
    }
}

#[test]
fn two_spherical_clusters_weights() {
    let (x, labels) = two_blobs(23);
    let fit = em_fit(&x, 2, ModelName::VII, &FitConfig::default()).unwrap();
    let z = fit.mixture.component_posteriors(&x).unwrap();
    for i in 0..z.n_points() {
        let top = z.row(i).iter().copied().fold(0.0, f64::max);
        assert!(top > 0.99, "row {i} not crisp: {:?}", z.row(i));
    }
    let mut w = fit.mixture.weights().to_vec();
    w.sort_by(f64::total_cmp);
    assert!((w[0] - 0.3).abs() < 0.02 && (w[1] - 0.7).abs() < 0.02, "{w:?}");
    let empirical = labels.iter().filter(|&&l| l == 0).count() as f64 / labels.len() as f64;
    assert!((w[0] - empirical).abs() < 1e-3);
}

#[test]
fn bic_prefers_one_component_for_gaussian_data() {
    let m = GaussianMixture::new(
        vec![1.0],
        vec![DVector::zeros(2)],
        vec![DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5])],
        ModelName::VVV,
    )
    .unwrap();
    let mut hits = 0;
    for rep in 0..20 {
        let s = sample_mixture(&m, 2000, &mut rng_from_seed(1000 + rep));
        let config = FitConfig {
            components: vec![1, 2, 3],
            seed: rep,
            ..FitConfig::default()
        };
        if select_model(&s.data, &config).unwrap().best.mixture.n_components() == 1 {
            hits += 1;
        }
    }
    assert!(hits >= 18, "G=1 chosen in {hits}/20");
}

#[test]
fn bic_finds_three_separated_components() {
    let (_, s) = separated_gaussians(3, 2, 8.0, 600, 31).unwrap();
    let config = FitConfig {
        components: (1..=5).collect(),
        models: vec![ModelName::EII, ModelName::VII, ModelName::VVV],
        ..FitConfig::default()
    };
    let sel = select_model(&s.data, &config).unwrap();
    assert_eq!(sel.best.mixture.n_components(), 3);
    assert_eq!(sel.table.len(), 15);
}

#[test]
fn single_candidate_is_returned() {
    let (x, _) = two_blobs(2);
    let config = FitConfig {
        components: vec![2],
        models: vec![ModelName::EEE],
        ..FitConfig::default()
    };
    let sel = select_model(&x, &config).unwrap();
    assert_eq!(sel.best.mixture.model(), ModelName::EEE);
    assert_eq!(sel.best.mixture.n_components(), 2);
    assert_eq!(sel.table.len(), 1);
}

#[test]
fn bic_invariant_under_component_permutation() {
    let (x, _) = two_blobs(9);
    let fit = em_fit(&x, 2, ModelName::VVV, &FitConfig::default()).unwrap();
    let m = &fit.mixture;
    let order = [1, 0];
    let permuted = GaussianMixture::new(
        order.iter().map(|&k| m.weights()[k]).collect(),
        order.iter().map(|&k| m.means()[k].clone()).collect(),
        order.iter().map(|&k| m.covariances()[k].clone()).collect(),
        m.model(),
    )
    .unwrap();
    let n = x.nrows();
    let a = bic(log_likelihood(m, &x).unwrap(), fit.n_parameters, n);
    let b = bic(log_likelihood(&permuted, &x).unwrap(), fit.n_parameters, n);
    assert!((a - b).abs() <= 1e-9 * a.abs(), "{a} vs {b}");
}

#[test]
fn fitted_mixtures_satisfy_invariants() {
    let (x, _) = two_blobs(4);
    for model in FITTABLE_MODELS {
        let fit = em_fit(&x, 3, model, &FitConfig::default()).unwrap();
        let m = &fit.mixture;
        assert!(m.weights().iter().all(|&w| w > 0.0));
        assert!((m.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for c in m.covariances() {
            assert!(c.clone().cholesky().is_some());
        }
    }
}

#[test]
fn fit_is_deterministic_per_seed() {
    let (x, _) = two_blobs(6);
    let config = FitConfig {
        components: vec![2, 3],
        models: vec![ModelName::VVI, ModelName::EEE],
        seed: 99,
        ..FitConfig::default()
    };
    let a = select_model(&x, &config).unwrap();
    let b = select_model(&x, &config).unwrap();
    assert_eq!(a.best.log_likelihood.to_bits(), b.best.log_likelihood.to_bits());
    assert_eq!(a.best.mixture.means(), b.best.mixture.means());
}
