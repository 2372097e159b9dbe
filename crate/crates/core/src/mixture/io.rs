//! JSON model files.
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "d": 2, "G": 2, "model": "VVV",
//!   "weights": [0.4, 0.6],
//!   "means": [[0, 0], [3, 1]],
//!   "covariances": [[[1, 0], [0, 1]], [[2, 0.5], [0.5, 1]]],
//!   "spec": [{"volume": 1, "shape": [1, 1], "orientation": [[1, 0], [0, 1]]}, ...]
//! }
//! ```
//!
//! Matrices are nested row-major arrays. `spec` is optional; when present it
//! must describe the same covariances.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{build_covariance, CovarianceSpec, GaussianMixture, ModelName};
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    #[serde(default = "default_version")]
    format_version: u32,
    d: usize,
    #[serde(rename = "G")]
    g: usize,
    model: ModelName,
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    covariances: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    spec: Option<Vec<SpecEntry>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SpecEntry {
    volume: f64,
    shape: Vec<f64>,
    orientation: Vec<Vec<f64>>,
}

fn default_version() -> u32 {
    MODEL_FORMAT_VERSION
}

fn square(path: &str, rows: &[Vec<f64>], d: usize) -> Result<DMatrix<f64>> {
    if rows.len() != d {
        return Err(Error::validation(
            path,
            format!("expected {d} rows, got {}", rows.len()),
        ));
    }
    for (r, row) in rows.iter().enumerate() {
        if row.len() != d {
            return Err(Error::validation(
                format!("{path}[{r}]"),
                format!("expected {d} entries, got {}", row.len()),
            ));
        }
    }
    Ok(DMatrix::from_fn(d, d, |r, c| rows[r][c]))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

pub fn model_from_json(text: &str) -> Result<GaussianMixture> {
    let file: ModelFile = serde_json::from_str(text)?;
    if file.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::validation(
            "format_version",
            format!(
                "unsupported version {} (expected {MODEL_FORMAT_VERSION})",
                file.format_version
            ),
        ));
    }
    let (g, d) = (file.g, file.d);
    if g == 0 {
        return Err(Error::validation("G", "must be at least 1"));
    }
    if d == 0 {
        return Err(Error::validation("d", "must be at least 1"));
    }
    if file.weights.len() != g {
        return Err(Error::validation(
            "weights",
            format!("expected {g} entries, got {}", file.weights.len()),
        ));
    }
    if file.means.len() != g {
        return Err(Error::validation(
            "means",
            format!("expected {g} rows, got {}", file.means.len()),
        ));
    }
    if file.covariances.len() != g {
        return Err(Error::validation(
            "covariances",
            format!("expected {g} matrices, got {}", file.covariances.len()),
        ));
    }
    let mut means = Vec::with_capacity(g);
    for (k, m) in file.means.iter().enumerate() {
        if m.len() != d {
            return Err(Error::validation(
                format!("means[{k}]"),
                format!("expected {d} entries, got {}", m.len()),
            ));
        }
        means.push(DVector::from_column_slice(m));
    }
    let covs = file
        .covariances
        .iter()
        .enumerate()
        .map(|(k, c)| square(&format!("covariances[{k}]"), c, d))
        .collect::<Result<Vec<_>>>()?;

    if let Some(specs) = &file.spec {
        if specs.len() != g {
            return Err(Error::validation(
                "spec",
                format!("expected {g} entries, got {}", specs.len()),
            ));
        }
        for (k, s) in specs.iter().enumerate() {
            let path = format!("spec[{k}]");
            if s.shape.len() != d {
                return Err(Error::validation(
                    format!("{path}.shape"),
                    format!("expected {d} entries, got {}", s.shape.len()),
                ));
            }
            let spec = CovarianceSpec {
                volume: s.volume,
                shape: DVector::from_column_slice(&s.shape),
                orientation: square(&format!("{path}.orientation"), &s.orientation, d)?,
            };
            let built = build_covariance(&spec).map_err(|e| match e {
                Error::Validation { path: inner, reason } => Error::validation(format!("{path}.{inner}"), reason),
                other => other,
            })?;
            let scale = covs[k].amax().max(1.0);
            let dev = (&built - &covs[k]).amax();
            if dev > 1e-8 * scale {
                return Err(Error::validation(
                    path,
                    format!("does not reproduce covariances[{k}] (max deviation {dev:e})"),
                ));
            }
        }
    }

    GaussianMixture::new(file.weights, means, covs, file.model)
}

/// Serializes a mixture; `with_spec` adds the volume/shape/orientation block.
pub fn model_to_json(mixture: &GaussianMixture, with_spec: bool) -> Result<String> {
    let spec = if with_spec {
        Some(
            mixture
                .covariance_specs()?
                .into_iter()
                .map(|s| SpecEntry {
                    volume: s.volume,
                    shape: s.shape.iter().copied().collect(),
                    orientation: rows_of(&s.orientation),
                })
                .collect(),
        )
    } else {
        None
    };
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        d: mixture.dim(),
        g: mixture.n_components(),
        model: mixture.model(),
        weights: mixture.weights().to_vec(),
        means: mixture.means().iter().map(|m| m.iter().copied().collect()).collect(),
        covariances: mixture.covariances().iter().map(rows_of).collect(),
        spec,
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn read_model(path: impl AsRef<Path>) -> Result<GaussianMixture> {
    model_from_json(&std::fs::read_to_string(path)?)
}

pub fn write_model(path: impl AsRef<Path>, mixture: &GaussianMixture, with_spec: bool) -> Result<()> {
    std::fs::write(path, model_to_json(mixture, with_spec)? + "\n")?;
    Ok(())
}
