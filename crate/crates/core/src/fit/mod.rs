//! Maximum-likelihood EM fitting for the covariance models with closed-form
//! M-steps, plus BIC model selection.

mod em;
mod init;

pub use em::{bic, em_fit, log_likelihood, select_model, FitConfig, FitResult, ModelScore, ModelSelection};
pub use init::kmeans_plus_plus;

use crate::error::{Error, Result};
use crate::mixture::ModelName;

/// Models this module can fit.
pub const FITTABLE_MODELS: [ModelName; 6] = [
    ModelName::EII,
    ModelName::VII,
    ModelName::EEI,
    ModelName::VVI,
    ModelName::EEE,
    ModelName::VVV,
];

/// Free parameters: `(G - 1)` weights, `G d` means, and the covariance
/// parameters allowed by the model's constraint.
pub fn n_parameters(model: ModelName, g: usize, d: usize) -> Result<usize> {
    let cov = match model {
        ModelName::EII => 1,
        ModelName::VII => g,
        ModelName::EEI => d,
        ModelName::VVI => g * d,
        ModelName::EEE => d * (d + 1) / 2,
        ModelName::VVV => g * d * (d + 1) / 2,
        other => return Err(Error::UnsupportedModel(other.to_string())),
    };
    Ok((g - 1) + g * d + cov)
}
