//! Amortized ratio estimators.
//!
//! * NRE learns the likelihood-to-evidence ratio `log p(x|θ) - log p(x)` from
//!   joint pairs `(x, θ)` against shifted pairs `(x, θ')`.
//! * BNRE adds the balance penalty
//!   `λ (mean σ(ℓ(x,θ)) + mean σ(ℓ(x,θ')) - 1)²`.
//! * DNRE takes `(x, θ, θ')` and learns `log p(x|θ) - log p(x|θ')` directly:
//!   label 1 for the ordered triple, label 0 with the parameters swapped.
//!
//! In every case the pre-sigmoid logit *is* the log-ratio estimate.

mod checkpoint;
mod model;
mod oracle;
mod train;

use serde::{Deserialize, Serialize};

pub use checkpoint::{checkpoint_digest, load, save, to_json, CHECKPOINT_FORMAT_VERSION};
pub use model::{RatioEstimator, Standardization, TrainingMeta};
pub use oracle::ExactRatio;
pub use train::{contrastive_loss, train, LossCurve, TrainConfig};

use ndarray::ArrayView2;

use crate::error::{Error, Result};

pub const DEFAULT_BNRE_LAMBDA: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "estimator_kind", rename_all = "lowercase")]
pub enum EstimatorKind {
    Nre,
    Bnre { lambda: f64 },
    Dnre,
}

impl EstimatorKind {
    pub fn bnre(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!(
                "BNRE lambda must be finite and >= 0, got {lambda}"
            )));
        }
        Ok(EstimatorKind::Bnre { lambda })
    }

    pub fn parse(name: &str, lambda: Option<f64>) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "nre" => Ok(EstimatorKind::Nre),
            "bnre" => Self::bnre(lambda.unwrap_or(DEFAULT_BNRE_LAMBDA)),
            "dnre" => Ok(EstimatorKind::Dnre),
            other => Err(Error::invalid(format!("unknown estimator `{other}`"))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            EstimatorKind::Nre => "nre",
            EstimatorKind::Bnre { .. } => "bnre",
            EstimatorKind::Dnre => "dnre",
        }
    }

    pub fn form(&self) -> RatioForm {
        match self {
            EstimatorKind::Dnre => RatioForm::Pairwise,
            _ => RatioForm::Evidence,
        }
    }
}

/// What a single evaluation of the model returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatioForm {
    /// `log r(x|θ) = log p(x|θ) - log p(x)`.
    Evidence,
    /// `log r(x|θ, θ') = log p(x|θ) - log p(x|θ')`, one pass.
    Pairwise,
}

/// Anything that produces log likelihood ratios: a trained network or an
/// exact analytic oracle.
pub trait LogRatio: Sync {
    fn form(&self) -> RatioForm;
    fn theta_dim(&self) -> usize;
    fn x_dim(&self) -> usize;

    /// `log r(x|θ)`; only for [`RatioForm::Evidence`] models.
    fn log_ratio_evidence(&self, x: &[f64], theta: &[f64]) -> Result<f64>;

    /// Single-pass `log r(x|θ, θ')`; only for [`RatioForm::Pairwise`] models.
    fn log_ratio_direct(&self, x: &[f64], theta: &[f64], theta_prime: &[f64]) -> Result<f64>;

    /// Value and θ-gradient of the model output: `ℓ(x, θ)` for evidence
    /// models, `ℓ(x, θ, θ')` (gradient of the θ slice only) for pairwise ones.
    fn grad_theta(&self, x: &[f64], theta: &[f64], theta_prime: Option<&[f64]>) -> Result<(f64, Vec<f64>)>;

    /// `log r(x|θ, θ'_i)` for every row of `bank` (pairwise models).
    fn log_ratio_bank(&self, x: &[f64], theta: &[f64], bank: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        bank.rows()
            .into_iter()
            .map(|row| self.log_ratio_direct(x, theta, &row.to_vec()))
            .collect()
    }

    /// `log r(x|θ_i)` for every row of `thetas` (evidence models).
    fn log_ratio_evidence_batch(&self, x: &[f64], thetas: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        thetas
            .rows()
            .into_iter()
            .map(|row| self.log_ratio_evidence(x, &row.to_vec()))
            .collect()
    }

    /// `log r(x|θ, θ')` for either form; evidence models take two passes.
    fn log_ratio_pairwise(&self, x: &[f64], theta: &[f64], theta_prime: &[f64]) -> Result<f64> {
        match self.form() {
            RatioForm::Evidence => Ok(self.log_ratio_evidence(x, theta)? - self.log_ratio_evidence(x, theta_prime)?),
            RatioForm::Pairwise => self.log_ratio_direct(x, theta, theta_prime),
        }
    }
}

macro_rules! forward_log_ratio {
    ($($ty:ty),*) => {$(
        impl<T: LogRatio + ?Sized> LogRatio for $ty {
            fn form(&self) -> RatioForm {
                (**self).form()
            }
            fn theta_dim(&self) -> usize {
                (**self).theta_dim()
            }
            fn x_dim(&self) -> usize {
                (**self).x_dim()
            }
            fn log_ratio_evidence(&self, x: &[f64], theta: &[f64]) -> Result<f64> {
                (**self).log_ratio_evidence(x, theta)
            }
            fn log_ratio_direct(&self, x: &[f64], theta: &[f64], theta_prime: &[f64]) -> Result<f64> {
                (**self).log_ratio_direct(x, theta, theta_prime)
            }
            fn grad_theta(&self, x: &[f64], theta: &[f64], theta_prime: Option<&[f64]>) -> Result<(f64, Vec<f64>)> {
                (**self).grad_theta(x, theta, theta_prime)
            }
            fn log_ratio_bank(&self, x: &[f64], theta: &[f64], bank: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
                (**self).log_ratio_bank(x, theta, bank)
            }
            fn log_ratio_evidence_batch(&self, x: &[f64], thetas: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
                (**self).log_ratio_evidence_batch(x, thetas)
            }
            fn log_ratio_pairwise(&self, x: &[f64], theta: &[f64], theta_prime: &[f64]) -> Result<f64> {
                (**self).log_ratio_pairwise(x, theta, theta_prime)
            }
        }
    )*};
}

forward_log_ratio!(&T, Box<T>);

pub(crate) fn wrong_form(expected: RatioForm) -> Error {
    match expected {
        RatioForm::Evidence => Error::ContractViolation("evidence ratio requested from a pairwise model".into()),
        RatioForm::Pairwise => {
            Error::ContractViolation("single-pass pairwise ratio requested from an evidence model".into())
        }
    }
}
