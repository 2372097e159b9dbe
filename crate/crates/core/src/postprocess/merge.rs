//! Connected-components merging of converged MEM positions.

use nalgebra::{DMatrix, DVector};

use super::union_find::UnionFind;
use crate::error::{Error, Result};
use crate::mixture::GaussianMixture;

/// Merged modes and the point-to-mode map.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSet {
    /// `M x d`, each row the mean of its tight cluster.
    pub modes: DMatrix<f64>,
    /// Mode index (0-based) for every input point.
    pub assignment: Vec<usize>,
    pub merge_tol: f64,
}

impl ModeSet {
    pub fn n_modes(&self) -> usize {
        self.modes.nrows()
    }

    pub fn mode_log_density(&self, mixture: &GaussianMixture) -> Result<DVector<f64>> {
        mixture.log_density(&self.modes)
    }
}

/// Unions every pair of rows within `tol` (Euclidean) of each other.
fn link_close_rows(points: &DMatrix<f64>, tol: f64, uf: &mut UnionFind) {
    let n = points.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| points[(a, 0)].total_cmp(&points[(b, 0)]).then(a.cmp(&b)));
    let tol2 = tol * tol;
    for (pos, &i) in order.iter().enumerate() {
        for &j in &order[pos + 1..] {
            if points[(j, 0)] - points[(i, 0)] > tol {
                break;
            }
            let dist2: f64 = points
                .row(i)
                .iter()
                .zip(points.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if dist2 <= tol2 {
                uf.union(i, j);
            }
        }
    }
}

fn component_means(points: &DMatrix<f64>, labels: &[usize], m: usize) -> DMatrix<f64> {
    let d = points.ncols();
    let mut sums = DMatrix::zeros(m, d);
    let mut counts = vec![0usize; m];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for j in 0..d {
            sums[(l, j)] += points[(i, j)];
        }
    }
    for (l, &c) in counts.iter().enumerate() {
        for j in 0..d {
            sums[(l, j)] /= c as f64;
        }
    }
    sums
}

/// Groups points into tight clusters: connected components of the graph with
/// an edge between every pair at distance `<= merge_tol`.
///
/// Components whose means end up within `merge_tol` of each other are merged
/// again, so the returned modes are pairwise farther apart than the tolerance.
/// Modes are numbered by the smallest point index they contain.
pub fn merge_tight_clusters(points: &DMatrix<f64>, merge_tol: f64) -> Result<ModeSet> {
    if !(merge_tol > 0.0 && merge_tol.is_finite()) {
        return Err(Error::validation("merge_tol", format!("must be > 0, got {merge_tol}")));
    }
    let n = points.nrows();
    if n == 0 || points.ncols() == 0 {
        return Err(Error::EmptyModeSet);
    }
    let mut uf = UnionFind::new(n);
    link_close_rows(points, merge_tol, &mut uf);
    let (mut labels, mut m) = uf.labels();
    let mut modes = component_means(points, &labels, m);

    loop {
        let mut mode_uf = UnionFind::new(m);
        link_close_rows(&modes, merge_tol, &mut mode_uf);
        let (mode_labels, m2) = mode_uf.labels();
        if m2 == m {
            break;
        }
        for l in labels.iter_mut() {
            *l = mode_labels[*l];
        }
        m = m2;
        modes = component_means(points, &labels, m);
    }

    Ok(ModeSet {
        modes,
        assignment: labels,
        merge_tol,
    })
}
