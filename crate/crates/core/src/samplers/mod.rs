//! Likelihood-free MCMC.
//!
//! Both samplers only need log-ratio differences. For a pairwise model the
//! Metropolis log acceptance ratio takes a single network pass,
//! `ℓ(x, θ*, θ) + log p(θ*) - log p(θ)`; evidence models use
//! `ℓ(x, θ*) - ℓ(x, θ)` with the current value cached.
//!
//! HMC uses `U(θ) = -log r(x|θ) - log p(θ)` and `K(m) = mᵀm / 2`. The
//! gradient of the log ratio is the input gradient of the logit with respect
//! to the θ slice; pairwise models draw a fresh `θ' ~ p(θ)` for every
//! gradient call.

mod chains;
mod hmc;
mod mh;

pub use chains::ChainSet;
pub use hmc::{hmc_sample, leapfrog, DualAveraging, HmcConfig};
pub use mh::{rwmh_sample, rwmh_sample_from, MhConfig};

use crate::error::{check_dim, Error, Result};
use crate::estimators::{LogRatio, RatioForm};
use crate::numcore::Rng;
use crate::posterior::PosteriorEvaluator;
use crate::tasks::PriorSpec;

/// A target the Metropolis step can query. `value` is whatever the target
/// wants cached for the current state (e.g. its log density).
pub trait MhTarget: Sync {
    fn dim(&self) -> usize;
    fn prior(&self) -> &PriorSpec;
    fn state_value(&self, theta: &[f64]) -> Result<f64>;
    /// Log of the target density ratio `π(proposed) / π(current)` together
    /// with the cached value for `proposed`. `-inf` outside the support.
    fn log_density_ratio(&self, current: &[f64], current_value: f64, proposed: &[f64]) -> Result<(f64, f64)>;
}

/// Targets that also provide (possibly stochastic) gradients of the log
/// density.
pub trait HmcTarget: MhTarget {
    fn grad_log_density(&self, theta: &[f64], rng: &mut Rng) -> Result<Vec<f64>>;
}

/// `min(0, log α)` for a symmetric proposal; `-inf` outside the support.
pub fn mh_accept_log_prob<T: MhTarget + ?Sized>(target: &T, current: &[f64], proposed: &[f64]) -> Result<f64> {
    if !target.prior().in_support(current) {
        return Err(Error::invalid("current state lies outside the prior support"));
    }
    let value = target.state_value(current)?;
    Ok(target.log_density_ratio(current, value, proposed)?.0.min(0.0))
}

/// Posterior implied by a ratio model for one observation.
pub struct LogRatioTarget<M> {
    pub model: M,
    pub x: Vec<f64>,
    pub prior: PriorSpec,
}

impl<M: LogRatio> LogRatioTarget<M> {
    pub fn new(model: M, x: Vec<f64>, prior: PriorSpec) -> Result<Self> {
        check_dim("observation", model.x_dim(), x.len())?;
        check_dim("prior vs model θ", model.theta_dim(), prior.dim())?;
        Ok(Self { model, x, prior })
    }

    /// Gradient of the log ratio with respect to θ: `∇θ ℓ(x, θ)` for evidence
    /// models, `∇θ ℓ(x, θ, θ')` with `θ' ~ p(θ)` drawn from `rng` for pairwise
    /// ones.
    pub fn grad_log_ratio(&self, theta: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        Ok(self.value_and_grad(theta, rng)?.1)
    }

    fn value_and_grad(&self, theta: &[f64], rng: &mut Rng) -> Result<(f64, Vec<f64>)> {
        check_dim("θ", self.prior.dim(), theta.len())?;
        match self.model.form() {
            RatioForm::Evidence => self.model.grad_theta(&self.x, theta, None),
            RatioForm::Pairwise => {
                let reference = self.prior.sample(rng);
                self.model.grad_theta(&self.x, theta, Some(&reference))
            }
        }
    }

    /// Baseline that differentiates the ratio itself and divides,
    /// `∇r / r` with `r = exp(ℓ)`. Agrees with [`Self::grad_log_ratio`] for
    /// moderate logits and breaks down (NaN) once `exp(ℓ)` underflows.
    pub fn grad_log_ratio_via_ratio(&self, theta: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        let (logit, grad) = self.value_and_grad(theta, rng)?;
        let r = logit.exp();
        Ok(grad.into_iter().map(|g| (r * g) / r).collect())
    }
}

impl<M: LogRatio> MhTarget for LogRatioTarget<M> {
    fn dim(&self) -> usize {
        self.prior.dim()
    }

    fn prior(&self) -> &PriorSpec {
        &self.prior
    }

    fn state_value(&self, theta: &[f64]) -> Result<f64> {
        match self.model.form() {
            RatioForm::Evidence => {
                let l = self.model.log_ratio_evidence(&self.x, theta)?;
                if !l.is_finite() {
                    return Err(Error::NonFinite("log ratio"));
                }
                Ok(l + self.prior.log_density(theta))
            }
            // the single-pass ratio needs no cached state
            RatioForm::Pairwise => Ok(0.0),
        }
    }

    fn log_density_ratio(&self, current: &[f64], current_value: f64, proposed: &[f64]) -> Result<(f64, f64)> {
        check_dim("θ", self.prior.dim(), proposed.len())?;
        let log_prior = self.prior.log_density(proposed);
        if log_prior == f64::NEG_INFINITY {
            return Ok((f64::NEG_INFINITY, f64::NEG_INFINITY));
        }
        match self.model.form() {
            RatioForm::Evidence => {
                let value = self.state_value(proposed)?;
                Ok((value - current_value, value))
            }
            RatioForm::Pairwise => {
                let l = self.model.log_ratio_direct(&self.x, proposed, current)?;
                if !l.is_finite() {
                    return Err(Error::NonFinite("log ratio"));
                }
                Ok((l + log_prior - self.prior.log_density(current), 0.0))
            }
        }
    }
}

impl<M: LogRatio> HmcTarget for LogRatioTarget<M> {
    fn grad_log_density(&self, theta: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        let mut g = self.grad_log_ratio(theta, rng)?;
        for (g, p) in g.iter_mut().zip(self.prior.grad_log_density(theta)) {
            *g += p;
        }
        Ok(g)
    }
}

/// Metropolis target on a posterior evaluator's log density, e.g. the Monte
/// Carlo marginalized pairwise posterior with a fixed θ' bank.
pub struct PosteriorTarget<'a, M> {
    pub evaluator: &'a PosteriorEvaluator<M>,
    pub x: Vec<f64>,
}

impl<M: LogRatio> MhTarget for PosteriorTarget<'_, M> {
    fn dim(&self) -> usize {
        self.evaluator.prior.dim()
    }

    fn prior(&self) -> &PriorSpec {
        &self.evaluator.prior
    }

    fn state_value(&self, theta: &[f64]) -> Result<f64> {
        self.evaluator.log_posterior(&self.x, theta)
    }

    fn log_density_ratio(&self, _current: &[f64], current_value: f64, proposed: &[f64]) -> Result<(f64, f64)> {
        let value = self.evaluator.log_posterior(&self.x, proposed)?;
        if value == f64::NEG_INFINITY {
            return Ok((f64::NEG_INFINITY, value));
        }
        Ok((value - current_value, value))
    }
}
