//! Volume/shape/orientation parameterization of a component covariance,
//! `Σ = λ U Δ Uᵀ` with `|Δ| = 1`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SPEC_TOL: f64 = 1e-10;

/// Parsimonious covariance model codes. `Free` marks an unconstrained input
/// that makes no claim about which family it belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelName {
    EII,
    VII,
    EEI,
    VEI,
    EVI,
    VVI,
    EEE,
    VEE,
    EVE,
    VVE,
    EEV,
    VEV,
    EVV,
    VVV,
    #[serde(rename = "FREE")]
    Free,
}

impl ModelName {
    pub const ALL: [ModelName; 15] = [
        ModelName::EII,
        ModelName::VII,
        ModelName::EEI,
        ModelName::VEI,
        ModelName::EVI,
        ModelName::VVI,
        ModelName::EEE,
        ModelName::VEE,
        ModelName::EVE,
        ModelName::VVE,
        ModelName::EEV,
        ModelName::VEV,
        ModelName::EVV,
        ModelName::VVV,
        ModelName::Free,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelName::EII => "EII",
            ModelName::VII => "VII",
            ModelName::EEI => "EEI",
            ModelName::VEI => "VEI",
            ModelName::EVI => "EVI",
            ModelName::VVI => "VVI",
            ModelName::EEE => "EEE",
            ModelName::VEE => "VEE",
            ModelName::EVE => "EVE",
            ModelName::VVE => "VVE",
            ModelName::EEV => "EEV",
            ModelName::VEV => "VEV",
            ModelName::EVV => "EVV",
            ModelName::VVV => "VVV",
            ModelName::Free => "FREE",
        }
    }
}

impl std::fmt::Display for ModelName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase();
        ModelName::ALL
            .iter()
            .copied()
            .find(|m| m.as_str() == upper)
            .ok_or_else(|| Error::validation("model", format!("unknown model code {s:?}")))
    }
}

/// One component covariance split into volume `λ`, shape `Δ` (diagonal,
/// stored as its entries) and orientation `U`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSpec {
    pub volume: f64,
    pub shape: DVector<f64>,
    pub orientation: DMatrix<f64>,
}

impl CovarianceSpec {
    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    /// Checks every invariant and names the first one that fails.
    pub fn validate(&self) -> Result<()> {
        let d = self.shape.len();
        if !(self.volume.is_finite() && self.volume > 0.0) {
            return Err(Error::validation("volume", format!("must be > 0, got {}", self.volume)));
        }
        if d == 0 {
            return Err(Error::validation("shape", "empty"));
        }
        if self.orientation.nrows() != d || self.orientation.ncols() != d {
            return Err(Error::validation(
                "orientation",
                format!(
                    "expected {d}x{d}, got {}x{}",
                    self.orientation.nrows(),
                    self.orientation.ncols()
                ),
            ));
        }
        for (j, &a) in self.shape.iter().enumerate() {
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::validation(
                    format!("shape[{j}]"),
                    format!("must be > 0, got {a}"),
                ));
            }
            if j > 0 && a > self.shape[j - 1] {
                return Err(Error::validation(
                    format!("shape[{j}]"),
                    "entries must be non-increasing",
                ));
            }
        }
        let prod: f64 = self.shape.iter().product();
        if (prod - 1.0).abs() > SPEC_TOL {
            return Err(Error::validation("shape", format!("determinant must be 1, got {prod}")));
        }
        let gram = self.orientation.transpose() * &self.orientation;
        let dev = (gram - DMatrix::<f64>::identity(d, d)).amax();
        if dev > SPEC_TOL {
            return Err(Error::validation(
                "orientation",
                format!("not orthogonal, max |UᵀU - I| = {dev:e}"),
            ));
        }
        Ok(())
    }
}

/// `λ U Δ Uᵀ`, after validating the spec.
pub fn build_covariance(spec: &CovarianceSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let u = &spec.orientation;
    let scaled = u * DMatrix::from_diagonal(&spec.shape);
    let mut sigma = scaled * u.transpose() * spec.volume;
    symmetrize(&mut sigma);
    Ok(sigma)
}

/// Eigen-decomposes an SPD matrix into volume, shape and orientation.
///
/// Eigenvalues are sorted decreasing and each eigenvector is signed so that
/// its first non-negligible coordinate is positive.
pub fn decompose_covariance(sigma: &DMatrix<f64>) -> Result<CovarianceSpec> {
    let d = sigma.nrows();
    if sigma.ncols() != d || d == 0 {
        return Err(Error::validation("covariance", "must be a non-empty square matrix"));
    }
    if sigma.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite {
            context: "decompose_covariance".into(),
        });
    }
    let eig = SymmetricEigen::new(sigma.clone());
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let values: Vec<f64> = order.iter().map(|&j| eig.eigenvalues[j]).collect();
    if values.iter().any(|&v| v <= 0.0) {
        return Err(Error::NotPositiveDefinite {
            context: "decompose_covariance eigenvalues".into(),
        });
    }
    let mean_log = values.iter().map(|v| v.ln()).sum::<f64>() / d as f64;
    let volume = mean_log.exp();
    let shape = DVector::from_iterator(d, values.iter().map(|v| (v.ln() - mean_log).exp()));

    let mut orientation = DMatrix::zeros(d, d);
    for (col, &j) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(j).into_owned();
        let lead = v.iter().copied().find(|c| c.abs() > 1e-12).unwrap_or(1.0);
        if lead < 0.0 {
            v.neg_mut();
        }
        orientation.set_column(col, &v);
    }
    Ok(CovarianceSpec {
        volume,
        shape,
        orientation,
    })
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let d = m.nrows();
    for i in 0..d {
        for j in (i + 1)..d {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn rotation(theta: f64) -> DMatrix<f64> {
        let (s, c) = theta.sin_cos();
        DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
    }

    #[test]
    fn identity_spec_builds_identity() {
        let spec = CovarianceSpec {
            volume: 1.0,
            shape: DVector::from_element(2, 1.0),
            orientation: DMatrix::identity(2, 2),
        };
        assert_abs_diff_eq!(build_covariance(&spec).unwrap(), DMatrix::identity(2, 2));
    }

    #[test]
    fn volume_scales_identity() {
        let spec = CovarianceSpec {
            volume: 4.0,
            shape: DVector::from_element(2, 1.0),
            orientation: DMatrix::identity(2, 2),
        };
        assert_abs_diff_eq!(build_covariance(&spec).unwrap(), DMatrix::identity(2, 2) * 4.0);
    }

    #[test]
    fn quarter_turn_swaps_axes() {
        let spec = CovarianceSpec {
            volume: 1.0,
            shape: DVector::from_vec(vec![2.0, 0.5]),
            orientation: rotation(std::f64::consts::FRAC_PI_2),
        };
        let sigma = build_covariance(&spec).unwrap();
        assert_abs_diff_eq!(
            sigma,
            DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 2.0])),
            epsilon = 1e-14
        );
    }

    #[test]
    fn invalid_specs_are_named() {
        let mut spec = CovarianceSpec {
            volume: 1.0,
            shape: DVector::from_vec(vec![2.0, 0.5]),
            orientation: DMatrix::identity(2, 2),
        };
        spec.shape = DVector::from_vec(vec![0.5, 2.0]);
        assert!(matches!(build_covariance(&spec), Err(Error::Validation { path, .. }) if path == "shape[1]"));
        spec.shape = DVector::from_vec(vec![2.0, 1.0]);
        assert!(matches!(build_covariance(&spec), Err(Error::Validation { path, .. }) if path == "shape"));
        spec.shape = DVector::from_vec(vec![2.0, 0.5]);
        spec.orientation[(0, 1)] = 0.3;
        assert!(matches!(build_covariance(&spec), Err(Error::Validation { path, .. }) if path == "orientation"));
        spec.orientation = DMatrix::identity(2, 2);
        spec.volume = 0.0;
        assert!(matches!(build_covariance(&spec), Err(Error::Validation { path, .. }) if path == "volume"));
    }

    #[test]
    fn decompose_identity() {
        let spec = decompose_covariance(&DMatrix::identity(3, 3)).unwrap();
        assert_abs_diff_eq!(spec.volume, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(spec.shape, DVector::from_element(3, 1.0), epsilon = 1e-14);
        assert_abs_diff_eq!(spec.orientation, DMatrix::identity(3, 3), epsilon = 1e-14);
    }

    #[test]
    fn decompose_diagonal() {
        let sigma = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]));
        let spec = decompose_covariance(&sigma).unwrap();
        assert_abs_diff_eq!(spec.volume, 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(spec.shape, DVector::from_vec(vec![2.0, 0.5]), epsilon = 1e-14);
        assert_abs_diff_eq!(spec.orientation, DMatrix::identity(2, 2), epsilon = 1e-14);
    }

    #[test]
    fn decompose_rejects_indefinite() {
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            decompose_covariance(&sigma),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn model_codes_parse() {
        for m in ModelName::ALL {
            assert_eq!(m.as_str().parse::<ModelName>().unwrap(), m);
        }
        assert!("XYZ".parse::<ModelName>().is_err());
    }

    fn spd_strategy() -> impl Strategy<Value = DMatrix<f64>> {
        prop_oneof![Just(2usize), Just(3usize), Just(5usize)].prop_flat_map(|d| {
            (
                proptest::collection::vec(-1.0f64..1.0, d * d),
                proptest::collection::vec(0.05f64..5.0, d),
            )
                .prop_map(move |(a, diag)| {
                    let a = DMatrix::from_vec(d, d, a);
                    a.transpose() * &a + DMatrix::from_diagonal(&DVector::from_vec(diag))
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn build_inverts_decompose(sigma in spd_strategy()) {
            let spec = decompose_covariance(&sigma).unwrap();
            spec.validate().unwrap();
            let rebuilt = build_covariance(&spec).unwrap();
            prop_assert!((rebuilt - &sigma).amax() < 1e-8);
        }
    }
}
