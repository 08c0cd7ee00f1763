//! Posterior log densities from ratio estimators.
//!
//! Evidence models give `log p̂(θ|x) = ℓ(x,θ) + log p(θ)`. Pairwise models
//! marginalize the reference parameter with a bank of prior draws:
//!
//! ```text
//! log p̂(θ|x) = -logsumexp_i(-ℓ(x,θ,θ'_i)) + log M + log p(θ)
//! ```
//!
//! since `(1/M) Σ 1/r(x|θ,θ'_i)` estimates `p(x) / p(x|θ)`. The bank is drawn
//! once and reused for every θ, so comparisons between parameters share the
//! same Monte Carlo noise.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::estimators::{LogRatio, RatioForm};
use crate::numcore::math::log_sum_exp;
use crate::numcore::Rng;
use crate::tasks::PriorSpec;

pub const DEFAULT_MC_SAMPLES: usize = 10_000;

/// Reference parameters `θ'_i` drawn from the prior.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaBank {
    pub seed: u64,
    pub thetas: Array2<f64>,
}

impl ThetaBank {
    pub fn draw(prior: &PriorSpec, m: usize, seed: u64) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("the θ' bank needs at least one draw"));
        }
        Ok(Self {
            seed,
            thetas: prior.sample_n(m, &mut Rng::new(seed)),
        })
    }

    pub fn len(&self) -> usize {
        self.thetas.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Settings recorded alongside results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatorInfo {
    pub form: String,
    pub mc_samples: Option<usize>,
    pub bank_seed: Option<u64>,
}

pub struct PosteriorEvaluator<M> {
    pub model: M,
    pub prior: PriorSpec,
    bank: Option<ThetaBank>,
}

impl<M: LogRatio> PosteriorEvaluator<M> {
    /// Evidence models ignore `m` and `seed`; pairwise models draw a bank
    /// of `m` prior samples from `seed`.
    pub fn new(model: M, prior: PriorSpec, m: usize, seed: u64) -> Result<Self> {
        match model.form() {
            RatioForm::Evidence => Self::from_parts(model, prior, None),
            RatioForm::Pairwise => {
                let bank = ThetaBank::draw(&prior, m, seed)?;
                Self::from_parts(model, prior, Some(bank))
            }
        }
    }

    pub fn with_bank(model: M, prior: PriorSpec, bank: ThetaBank) -> Result<Self> {
        Self::from_parts(model, prior, Some(bank))
    }

    fn from_parts(model: M, prior: PriorSpec, bank: Option<ThetaBank>) -> Result<Self> {
        check_dim("prior vs model θ", model.theta_dim(), prior.dim())?;
        match (&bank, model.form()) {
            (None, RatioForm::Pairwise) => {
                return Err(Error::ContractViolation("pairwise models need a θ' bank".into()))
            }
            (Some(_), RatioForm::Evidence) => {
                return Err(Error::ContractViolation("evidence models take no θ' bank".into()))
            }
            (Some(b), _) => {
                if b.is_empty() {
                    return Err(Error::invalid("the θ' bank needs at least one draw"));
                }
                check_dim("θ' bank", prior.dim(), b.thetas.ncols())?;
                if b.thetas.rows().into_iter().any(|r| !prior.in_support(&r.to_vec())) {
                    return Err(Error::invalid("θ' bank rows must lie in the prior support"));
                }
            }
            (None, RatioForm::Evidence) => {}
        }
        Ok(Self { model, prior, bank })
    }

    pub fn bank(&self) -> Option<&ThetaBank> {
        self.bank.as_ref()
    }

    pub fn info(&self) -> EvaluatorInfo {
        EvaluatorInfo {
            form: match self.model.form() {
                RatioForm::Evidence => "evidence".into(),
                RatioForm::Pairwise => "pairwise".into(),
            },
            mc_samples: self.bank.as_ref().map(ThetaBank::len),
            bank_seed: self.bank.as_ref().map(|b| b.seed),
        }
    }

    /// `-inf` outside the prior support; non-finite model outputs are errors.
    pub fn log_posterior(&self, x: &[f64], theta: &[f64]) -> Result<f64> {
        check_dim("θ", self.prior.dim(), theta.len())?;
        let log_prior = self.prior.log_density(theta);
        if log_prior == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        let log_ratio = match &self.bank {
            None => self.model.log_ratio_evidence(x, theta)?,
            Some(bank) => {
                let mut neg = self.model.log_ratio_bank(x, theta, bank.thetas.view())?;
                if neg.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("pairwise log ratio"));
                }
                neg.iter_mut().for_each(|v| *v = -*v);
                -log_sum_exp(&neg) + (bank.len() as f64).ln()
            }
        };
        if !log_ratio.is_finite() {
            return Err(Error::NonFinite("log ratio"));
        }
        Ok(log_ratio + log_prior)
    }

    /// [`Self::log_posterior`] for every row, in parallel.
    pub fn log_posterior_rows(&self, x: &[f64], thetas: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        check_dim("θ", self.prior.dim(), thetas.ncols())?;
        if self.bank.is_none() {
            // one batched pass for the in-support rows
            let rows: Vec<Vec<f64>> = thetas.rows().into_iter().map(|r| r.to_vec()).collect();
            let inside: Vec<usize> = (0..rows.len()).filter(|&i| self.prior.in_support(&rows[i])).collect();
            let mut sub = Array2::zeros((inside.len(), thetas.ncols()));
            for (k, &i) in inside.iter().enumerate() {
                sub.row_mut(k).assign(&thetas.row(i));
            }
            let ratios = self.model.log_ratio_evidence_batch(x, sub.view())?;
            let mut out = vec![f64::NEG_INFINITY; rows.len()];
            for (k, &i) in inside.iter().enumerate() {
                if !ratios[k].is_finite() {
                    return Err(Error::NonFinite("log ratio"));
                }
                out[i] = ratios[k] + self.prior.log_density(&rows[i]);
            }
            return Ok(out);
        }
        thetas
            .rows()
            .into_iter()
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|r| self.log_posterior(x, &r.to_vec()))
            .collect()
    }

    /// Log posterior on a regular grid including both box ends; one or two
    /// parameter dimensions.
    pub fn grid(&self, x: &[f64], low: &[f64], high: &[f64], resolution: usize) -> Result<PosteriorGrid> {
        let d = self.prior.dim();
        if d > 2 {
            return Err(Error::invalid(format!(
                "grids need at most 2 parameter dimensions, got {d}"
            )));
        }
        check_dim("grid low", d, low.len())?;
        check_dim("grid high", d, high.len())?;
        if resolution < 2 || low.iter().zip(high).any(|(l, h)| !(l < h)) {
            return Err(Error::invalid("grid needs resolution >= 2 and low < high"));
        }
        let axes: Vec<Vec<f64>> = (0..d)
            .map(|k| {
                (0..resolution)
                    .map(|i| low[k] + (high[k] - low[k]) * i as f64 / (resolution - 1) as f64)
                    .collect()
            })
            .collect();
        let n = resolution.pow(d as u32);
        let mut points = Array2::zeros((n, d));
        for (idx, mut row) in points.rows_mut().into_iter().enumerate() {
            if d == 1 {
                row[0] = axes[0][idx];
            } else {
                row[0] = axes[0][idx / resolution];
                row[1] = axes[1][idx % resolution];
            }
        }
        let log_density = self.log_posterior_rows(x, points.view())?;
        Ok(PosteriorGrid { axes, log_density })
    }
}

/// Row-major grid of log posterior values (last axis fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorGrid {
    pub axes: Vec<Vec<f64>>,
    pub log_density: Vec<f64>,
}

impl PosteriorGrid {
    pub fn to_csv(&self) -> String {
        let header: Vec<String> = (0..self.axes.len()).map(|k| format!("theta{k}")).collect();
        let mut out = format!("{},log_posterior\n", header.join(","));
        let r = self.axes[0].len();
        for (idx, v) in self.log_density.iter().enumerate() {
            if self.axes.len() == 1 {
                let _ = writeln!(out, "{:?},{v:?}", self.axes[0][idx]);
            } else {
                let _ = writeln!(out, "{:?},{:?},{v:?}", self.axes[0][idx / r], self.axes[1][idx % r]);
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}
