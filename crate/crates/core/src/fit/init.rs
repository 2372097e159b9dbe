use nalgebra::DMatrix;
use rand::Rng;

fn dist2(x: &DMatrix<f64>, i: usize, centers: &DMatrix<f64>, c: usize) -> f64 {
    x.row(i)
        .iter()
        .zip(centers.row(c).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// k-means++ seeding: the first center uniformly, each next one with
/// probability proportional to squared distance from the nearest chosen center.
pub fn kmeans_plus_plus<R: Rng + ?Sized>(x: &DMatrix<f64>, k: usize, rng: &mut R) -> DMatrix<f64> {
    let (n, d) = x.shape();
    assert!(k >= 1 && k <= n, "need 1 <= k <= n");
    let mut centers = DMatrix::zeros(k, d);
    let first = rng.random_range(0..n);
    centers.set_row(0, &x.row(first));
    let mut nearest: Vec<f64> = (0..n).map(|i| dist2(x, i, &centers, 0)).collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in nearest.iter().enumerate() {
                acc += w;
                if acc >= target && w > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.set_row(c, &x.row(pick));
        for (i, v) in nearest.iter_mut().enumerate() {
            *v = v.min(dist2(x, i, &centers, c));
        }
    }
    centers
}

/// A few Lloyd iterations from the given centers; returns hard labels.
pub(crate) fn lloyd(x: &DMatrix<f64>, mut centers: DMatrix<f64>, iterations: usize) -> Vec<usize> {
    let (n, d) = x.shape();
    let k = centers.nrows();
    let mut labels = vec![0; n];
    for _ in 0..iterations {
        let mut changed = false;
        for (i, label) in labels.iter_mut().enumerate() {
            let best = (0..k)
                .min_by(|&a, &b| dist2(x, i, &centers, a).total_cmp(&dist2(x, i, &centers, b)))
                .unwrap_or(0);
            if best != *label {
                *label = best;
                changed = true;
            }
        }
        let mut sums = DMatrix::<f64>::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for j in 0..d {
                sums[(l, j)] += x[(i, j)];
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..d {
                    centers[(c, j)] = sums[(c, j)] / counts[c] as f64;
                }
            }
        }
        if !changed {
            break;
        }
    }
    labels
}
