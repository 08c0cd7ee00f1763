//! Expected coverage of highest-posterior-density regions.
//!
//! For each pair `(θ*, x) ~ p(θ) p(x|θ)` the rank of `θ*` is the number of
//! posterior samples with a lower estimated density than `θ*`, plus a
//! uniformly drawn share of the samples whose density ties with it. `θ*` lies in
//! the HPD region of credibility `c` iff `rank / S ≥ 1 - c`, so the empirical
//! coverage at level `c` is the fraction of pairs satisfying that.

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2};
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::LogRatio;
use crate::numcore::Rng;
use crate::posterior::PosteriorEvaluator;
use crate::samplers::{rwmh_sample, rwmh_sample_from, LogRatioTarget, MhConfig, PosteriorTarget};
use crate::tasks::{PriorSpec, TaskSpec};

pub const MIN_COVERAGE_SAMPLES: usize = 100;

/// A posterior approximation that can be both evaluated and sampled.
pub trait PosteriorApprox: Sync {
    fn log_density(&self, x: &[f64], theta: &[f64]) -> Result<f64>;

    fn log_density_rows(&self, x: &[f64], thetas: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        thetas
            .rows()
            .into_iter()
            .map(|r| self.log_density(x, &r.to_vec()))
            .collect()
    }

    fn sample(&self, x: &[f64], n: usize, rng: &mut Rng) -> Result<Array2<f64>>;
}

/// The exact posterior of a task with a closed form (or grid) solution.
pub struct AnalyticPosterior(pub TaskSpec);

impl PosteriorApprox for AnalyticPosterior {
    fn log_density(&self, x: &[f64], theta: &[f64]) -> Result<f64> {
        self.0
            .analytic_log_posterior(x, theta)?
            .ok_or_else(|| Error::MissingOracle {
                task: self.0.name().to_string(),
                what: "analytic posterior",
            })
    }

    fn sample(&self, x: &[f64], n: usize, rng: &mut Rng) -> Result<Array2<f64>> {
        self.0.sample_posterior(x, n, rng)
    }
}

/// Ignores the observation and returns the prior.
pub struct PriorOnly(pub PriorSpec);

impl PosteriorApprox for PriorOnly {
    fn log_density(&self, _x: &[f64], theta: &[f64]) -> Result<f64> {
        Ok(self.0.log_density(theta))
    }

    fn sample(&self, _x: &[f64], n: usize, rng: &mut Rng) -> Result<Array2<f64>> {
        Ok(self.0.sample_n(n, rng))
    }
}

/// Random-walk MH on a posterior evaluator's density. With a pairwise model
/// the target is the Monte Carlo marginalized posterior (fixed θ' bank), and
/// chains can be warm-started from a cheap pilot run on the single-pass
/// pairwise ratio.
pub struct McmcPosterior<'a, M> {
    pub evaluator: &'a PosteriorEvaluator<M>,
    /// `n_steps` is derived from the requested sample count.
    pub chains: MhConfig,
    /// Pilot run whose final states start the main chains; must use the same
    /// number of chains.
    pub pilot: Option<MhConfig>,
}

impl<M: LogRatio> PosteriorApprox for McmcPosterior<'_, M> {
    fn log_density(&self, x: &[f64], theta: &[f64]) -> Result<f64> {
        self.evaluator.log_posterior(x, theta)
    }

    fn log_density_rows(&self, x: &[f64], thetas: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        self.evaluator.log_posterior_rows(x, thetas)
    }

    fn sample(&self, x: &[f64], n: usize, rng: &mut Rng) -> Result<Array2<f64>> {
        let chains = self.chains.n_chains;
        let per_chain = n.div_ceil(chains);
        let cfg = MhConfig {
            n_steps: per_chain * self.chains.thin,
            seed: rng.next_u64(),
            ..self.chains.clone()
        };
        let target = PosteriorTarget {
            evaluator: self.evaluator,
            x: x.to_vec(),
        };
        let run = match &self.pilot {
            Some(pilot) => {
                if pilot.n_chains != chains {
                    return Err(Error::invalid("pilot and main runs need the same number of chains"));
                }
                let pilot_target =
                    LogRatioTarget::new(&self.evaluator.model, x.to_vec(), self.evaluator.prior.clone())?;
                let pilot_cfg = MhConfig {
                    seed: rng.next_u64(),
                    ..pilot.clone()
                };
                let warm = rwmh_sample(&pilot_target, &pilot_cfg)?;
                let mut init = Array2::zeros((chains, self.evaluator.prior.dim()));
                for (k, draws) in warm.draws.iter().enumerate() {
                    init.row_mut(k).assign(&draws.row(draws.nrows() - 1));
                }
                rwmh_sample_from(&target, &cfg, init.view())?
            }
            None => rwmh_sample(&target, &cfg)?,
        };
        let pooled = run.pooled();
        Ok(pooled.slice(ndarray::s![..n, ..]).to_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCurve {
    pub levels: Vec<f64>,
    pub coverage: Vec<f64>,
    pub n_pairs: usize,
    pub n_samples: usize,
    /// Size of the θ' bank for Monte Carlo marginalized posteriors.
    pub mc_samples: Option<usize>,
    /// Per pair, the rank of θ* divided by the number of samples.
    pub rank_fractions: Vec<f64>,
}

impl CoverageCurve {
    pub fn from_ranks(rank_fractions: Vec<f64>, levels: &[f64], n_samples: usize) -> Self {
        let n = rank_fractions.len();
        let coverage = levels
            .iter()
            .map(|&c| {
                let alpha = 1.0 - c;
                // tolerate round-off in 1 - c
                rank_fractions.iter().filter(|&&f| f >= alpha - 1e-12).count() as f64 / n as f64
            })
            .collect();
        Self {
            levels: levels.to_vec(),
            coverage,
            n_pairs: n,
            n_samples,
            mc_samples: None,
            rank_fractions,
        }
    }

    pub fn max_deviation(&self) -> f64 {
        self.levels
            .iter()
            .zip(&self.coverage)
            .map(|(l, c)| (l - c).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,coverage\n");
        for (l, c) in self.levels.iter().zip(&self.coverage) {
            let _ = writeln!(out, "{l:?},{c:?}");
        }
        out
    }
}

/// Probability that a calibrated posterior covers θ* at `level` when ranks
/// take the `S + 1` values `0..=S` uniformly.
pub fn calibrated_coverage(level: f64, n_samples: usize) -> f64 {
    let s = n_samples as f64;
    let min_rank = (s * (1.0 - level) - 1e-9).ceil().max(0.0);
    (s - min_rank + 1.0) / (s + 1.0)
}

/// Three binomial standard errors around the calibrated expectation plus the
/// `1 / (S + 1)` gap between that expectation and the nominal level.
pub fn coverage_tolerance(level: f64, n_pairs: usize, n_samples: usize) -> f64 {
    let p = calibrated_coverage(level, n_samples);
    3.0 * (p * (1.0 - p) / n_pairs as f64).sqrt() + 1.0 / (n_samples as f64 + 1.0)
}

/// `0, 0.05, ..., 1`.
pub fn default_levels() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

/// Pairs are drawn from the joint with `Rng::new(seed).split(i)` for pair
/// `i`; posterior samples use a sub-stream of the same pair stream.
pub fn expected_coverage<P: PosteriorApprox + ?Sized>(
    approx: &P,
    task: &TaskSpec,
    n_pairs: usize,
    n_samples: usize,
    levels: &[f64],
    seed: u64,
) -> Result<CoverageCurve> {
    if n_samples < MIN_COVERAGE_SAMPLES {
        return Err(Error::invalid(format!(
            "expected coverage needs at least {MIN_COVERAGE_SAMPLES} posterior samples, got {n_samples}"
        )));
    }
    if n_pairs == 0 {
        return Err(Error::invalid("expected coverage needs at least one pair"));
    }
    if levels.iter().any(|l| !(0.0..=1.0).contains(l)) || levels.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("credibility levels must be sorted within [0, 1]"));
    }
    let root = Rng::new(seed);
    let fractions: Vec<f64> = (0..n_pairs)
        .into_par_iter()
        .map(|i| {
            let stream = root.split(i as u64);
            let mut rng = stream.split(0);
            let theta = task.prior.sample(&mut rng);
            let x = task.simulate(&theta, &mut rng)?;
            let samples = approx.sample(&x, n_samples, &mut stream.split(1))?;
            let truth = approx.log_density(&x, &theta)?;
            let values = approx.log_density_rows(&x, samples.view())?;
            let below = values.iter().filter(|&&v| v < truth).count();
            let ties = values.iter().filter(|&&v| v == truth).count();
            // a uniform share of tied samples keeps flat densities calibrated
            let rank = below + stream.split(2).below(ties + 1);
            Ok(rank as f64 / n_samples as f64)
        })
        .collect::<Result<_>>()?;
    Ok(CoverageCurve::from_ranks(fractions, levels, n_samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_is_monotone_and_ends_at_one() {
        let curve = CoverageCurve::from_ranks(vec![0.0, 0.3, 0.31, 0.9, 1.0], &default_levels(), 100);
        assert!(curve.coverage.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(*curve.coverage.last().unwrap(), 1.0);
        assert_eq!(curve.coverage[0], 0.2);
        // level 0.7: rank fraction >= 0.3
        assert_eq!(curve.coverage[14], 0.8);
    }

    #[test]
    fn prior_is_calibrated() {
        let task = TaskSpec::two_moons();
        let curve = expected_coverage(&PriorOnly(task.prior.clone()), &task, 400, 100, &default_levels(), 3).unwrap();
        for (l, c) in curve.levels.iter().zip(&curve.coverage) {
            assert!((l - c).abs() <= coverage_tolerance(*l, 400, 100), "level {l}: {c}");
        }
        assert!(curve.to_csv().starts_with("level,coverage\n0.0,"));
    }

    #[test]
    fn calibrated_expectation_of_discrete_ranks() {
        assert_eq!(calibrated_coverage(0.0, 100), 1.0 / 101.0);
        assert_eq!(calibrated_coverage(1.0, 100), 1.0);
        assert_eq!(calibrated_coverage(0.5, 100), 51.0 / 101.0);
        assert_eq!(calibrated_coverage(0.05, 100), 6.0 / 101.0);
    }

    #[test]
    fn too_few_samples_rejected() {
        let task = TaskSpec::two_moons();
        assert!(expected_coverage(&PriorOnly(task.prior.clone()), &task, 10, 99, &default_levels(), 0).is_err());
    }
}
