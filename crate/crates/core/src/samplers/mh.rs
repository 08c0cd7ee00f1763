use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::chains::{require_positive, zero_acceptance_warning, ChainSet};
use super::MhTarget;
use crate::error::{check_dim, Error, Result};
use crate::numcore::Rng;

/// Random-walk Metropolis-Hastings settings. `n_steps` counts post burn-in
/// iterations; every `thin`-th one is kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MhConfig {
    pub n_chains: usize,
    pub n_steps: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Standard deviation of the isotropic Gaussian proposal.
    pub proposal_std: f64,
    pub seed: u64,
}

impl Default for MhConfig {
    fn default() -> Self {
        Self {
            n_chains: 8,
            n_steps: 3000,
            burn_in: 1000,
            thin: 1,
            proposal_std: 0.1,
            seed: 0,
        }
    }
}

impl MhConfig {
    pub fn validate(&self) -> Result<()> {
        require_positive("n_chains", self.n_chains)?;
        require_positive("n_steps", self.n_steps)?;
        require_positive("thin", self.thin)?;
        if !(self.proposal_std > 0.0) || !self.proposal_std.is_finite() {
            return Err(Error::invalid("proposal_std must be positive"));
        }
        Ok(())
    }
}

struct ChainRun {
    draws: Array2<f64>,
    acceptance: f64,
    burn_in_accepted: usize,
}

fn run_chain<T: MhTarget + ?Sized>(target: &T, cfg: &MhConfig, mut theta: Vec<f64>, rng: &mut Rng) -> Result<ChainRun> {
    let d = theta.len();
    let mut value = target.state_value(&theta)?;
    let mut draws = Array2::zeros((cfg.n_steps / cfg.thin, d));
    let mut kept = 0;
    let (mut accepted, mut burn_in_accepted) = (0usize, 0usize);
    let mut proposed = vec![0.0; d];
    for step in 0..cfg.burn_in + cfg.n_steps {
        for (p, t) in proposed.iter_mut().zip(&theta) {
            *p = t + cfg.proposal_std * rng.normal();
        }
        let (log_alpha, new_value) = target.log_density_ratio(&theta, value, &proposed)?;
        let u = rng.uniform();
        if log_alpha >= 0.0 || u.ln() < log_alpha {
            theta.copy_from_slice(&proposed);
            value = new_value;
            if step < cfg.burn_in {
                burn_in_accepted += 1;
            } else {
                accepted += 1;
            }
        }
        if step >= cfg.burn_in && (step - cfg.burn_in + 1).is_multiple_of(cfg.thin) && kept < draws.nrows() {
            draws.row_mut(kept).assign(&ndarray::ArrayView1::from(&theta));
            kept += 1;
        }
    }
    Ok(ChainRun {
        draws,
        acceptance: accepted as f64 / cfg.n_steps as f64,
        burn_in_accepted,
    })
}

/// Chains start at independent prior draws. Chain `k` owns the stream
/// `Rng::new(seed).split(k)`: sub-stream 0 draws the start, sub-stream 1
/// drives the moves.
pub fn rwmh_sample<T: MhTarget + ?Sized>(target: &T, cfg: &MhConfig) -> Result<ChainSet> {
    cfg.validate()?;
    let root = Rng::new(cfg.seed);
    let mut init = Array2::zeros((cfg.n_chains, target.dim()));
    for (k, mut row) in init.rows_mut().into_iter().enumerate() {
        let draw = target.prior().sample(&mut root.split(k as u64).split(0));
        row.assign(&ndarray::ArrayView1::from(&draw));
    }
    run(target, cfg, init.view())
}

/// Same as [`rwmh_sample`] with explicit starting points, one row per chain.
pub fn rwmh_sample_from<T: MhTarget + ?Sized>(
    target: &T,
    cfg: &MhConfig,
    init: ArrayView2<'_, f64>,
) -> Result<ChainSet> {
    cfg.validate()?;
    check_dim("initial states", cfg.n_chains, init.nrows())?;
    check_dim("initial state", target.dim(), init.ncols())?;
    for row in init.rows() {
        if !target.prior().in_support(&row.to_vec()) {
            return Err(Error::invalid("initial states must lie in the prior support"));
        }
    }
    run(target, cfg, init)
}

fn run<T: MhTarget + ?Sized>(target: &T, cfg: &MhConfig, init: ArrayView2<'_, f64>) -> Result<ChainSet> {
    let root = Rng::new(cfg.seed);
    let runs: Vec<(u64, ChainRun)> = (0..cfg.n_chains)
        .into_par_iter()
        .map(|k| {
            let chain = root.split(k as u64);
            let mut rng = chain.split(1);
            Ok((chain.seed(), run_chain(target, cfg, init.row(k).to_vec(), &mut rng)?))
        })
        .collect::<Result<_>>()?;
    let mut warnings = Vec::new();
    for (k, (_, r)) in runs.iter().enumerate() {
        if cfg.burn_in > 0 && r.burn_in_accepted == 0 {
            warnings.push(zero_acceptance_warning(k, cfg.burn_in));
        }
    }
    Ok(ChainSet {
        sampler: "rwmh",
        acceptance: runs.iter().map(|(_, r)| r.acceptance).collect(),
        burn_in_acceptance: runs
            .iter()
            .map(|(_, r)| r.burn_in_accepted as f64 / cfg.burn_in.max(1) as f64)
            .collect(),
        divergences: vec![0; cfg.n_chains],
        step_size_trace: Vec::new(),
        final_step_size: None,
        seeds: runs.iter().map(|(s, _)| *s).collect(),
        warnings,
        config: serde_json::to_value(cfg)?,
        draws: runs.into_iter().map(|(_, r)| r.draws).collect(),
    })
}
