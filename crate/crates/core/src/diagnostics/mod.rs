//! Evaluation of trained estimators: ratio error against an exact oracle,
//! classifier two-sample tests, expected coverage, log posterior density at
//! the true parameters, and candidate rankings.

mod c2st;
mod coverage;
mod ranking;

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

pub use c2st::{c2st, c2st_with, C2stConfig, C2stResult, MIN_C2ST_SAMPLES};
pub use coverage::{
    calibrated_coverage, coverage_tolerance, default_levels, expected_coverage, AnalyticPosterior, CoverageCurve,
    McmcPosterior, PosteriorApprox, PriorOnly, MIN_COVERAGE_SAMPLES,
};
pub use ranking::{rank_candidates, rank_scores, ranking_order, RankingTable};

use crate::error::{check_dim, Error, Result};
use crate::estimators::LogRatio;
use crate::numcore::math::mean;
use crate::numcore::Rng;
use crate::posterior::EvaluatorInfo;
use crate::tasks::TaskSpec;

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Mean squared error of `log r̂(x, θ_num, θ')` against the task's exact
/// log likelihood ratio over every `(x, θ')` combination.
pub fn ratio_mse<M: LogRatio + ?Sized>(
    model: &M,
    task: &TaskSpec,
    theta_num: &[f64],
    theta_primes: ArrayView2<'_, f64>,
    xs: ArrayView2<'_, f64>,
) -> Result<f64> {
    check_dim("numerator parameter", task.theta_dim, theta_num.len())?;
    check_dim("contrast parameters", task.theta_dim, theta_primes.ncols())?;
    check_dim("observations", task.x_dim, xs.ncols())?;
    if theta_primes.nrows() == 0 || xs.nrows() == 0 {
        return Err(Error::invalid(
            "ratio MSE needs at least one observation and one contrast parameter",
        ));
    }
    let mut total = 0.0;
    for x in xs.rows() {
        let x = x.to_vec();
        for tp in theta_primes.rows() {
            let tp = tp.to_vec();
            let truth = task.log_ratio(&x, theta_num, &tp)?;
            let est = model.log_ratio_pairwise(&x, theta_num, &tp)?;
            total += (est - truth).powi(2);
        }
    }
    let mse = total / (xs.nrows() * theta_primes.nrows()) as f64;
    if !mse.is_finite() {
        return Err(Error::NonFinite("ratio MSE"));
    }
    Ok(mse)
}

/// Settings of the one-dimensional ratio error protocol: the numerator is
/// fixed at `theta_num`, `θ'` runs over an inclusive grid, and observations
/// are simulated at `theta_num`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatioMseProtocol {
    pub theta_num: f64,
    pub grid_points: usize,
    pub n_x: usize,
    pub seed: u64,
}

impl Default for RatioMseProtocol {
    fn default() -> Self {
        Self {
            theta_num: 0.0,
            grid_points: 200,
            n_x: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioMseResult {
    pub mse: f64,
    pub theta_num: f64,
    pub grid_low: f64,
    pub grid_high: f64,
    pub grid_points: usize,
    pub n_x: usize,
    pub seed: u64,
}

/// Ratio MSE on a one-parameter task with the `θ'` grid spanning
/// `[low, high]`, normally the range of the training parameters.
pub fn ratio_mse_protocol<M: LogRatio + ?Sized>(
    model: &M,
    task: &TaskSpec,
    low: f64,
    high: f64,
    protocol: &RatioMseProtocol,
) -> Result<RatioMseResult> {
    if task.theta_dim != 1 {
        return Err(Error::invalid("the ratio MSE protocol needs a one-parameter task"));
    }
    if !(low < high) || protocol.grid_points < 2 || protocol.n_x == 0 {
        return Err(Error::invalid(
            "ratio MSE grid needs low < high, two points, and one observation",
        ));
    }
    let n = protocol.grid_points;
    let grid = Array2::from_shape_fn((n, 1), |(i, _)| low + (high - low) * i as f64 / (n - 1) as f64);
    let mut rng = Rng::new(protocol.seed);
    let theta_num = [protocol.theta_num];
    let mut xs = Array2::zeros((protocol.n_x, task.x_dim));
    for mut row in xs.rows_mut() {
        let x = task.simulate(&theta_num, &mut rng)?;
        row.assign(&ndarray::ArrayView1::from(&x));
    }
    let mse = ratio_mse(model, task, &theta_num, grid.view(), xs.view())?;
    Ok(RatioMseResult {
        mse,
        theta_num: protocol.theta_num,
        grid_low: low,
        grid_high: high,
        grid_points: n,
        n_x: protocol.n_x,
        seed: protocol.seed,
    })
}

/// Two-sided Kolmogorov-Smirnov distance between the empirical CDF of
/// `samples` and `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0, |d, (i, &v)| {
        let f = cdf(v);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSummary {
    /// Over finite values only.
    pub mean: f64,
    pub std: f64,
    pub n_finite: usize,
    pub n_neg_inf: usize,
}

/// Summarizes `log p̂(θ*|x)` over `(θ*, x)` pairs given as matching rows.
/// `-inf` values are counted separately and left out of the moments.
pub fn log_posterior_at_truth<F>(
    log_posterior: F,
    thetas: ArrayView2<'_, f64>,
    xs: ArrayView2<'_, f64>,
) -> Result<TruthSummary>
where
    F: Fn(&[f64], &[f64]) -> Result<f64> + Sync,
{
    use rayon::prelude::*;
    check_dim("pairs", thetas.nrows(), xs.nrows())?;
    if thetas.nrows() == 0 {
        return Err(Error::invalid("log posterior at truth needs at least one pair"));
    }
    let values: Vec<f64> = (0..thetas.nrows())
        .into_par_iter()
        .map(|i| log_posterior(&xs.row(i).to_vec(), &thetas.row(i).to_vec()))
        .collect::<Result<_>>()?;
    if values.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::NonFinite("log posterior at truth"));
    }
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let (m, s) = if finite.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        let m = mean(&finite);
        let var = finite.iter().map(|v| (v - m).powi(2)).sum::<f64>() / finite.len() as f64;
        (m, var.sqrt())
    };
    Ok(TruthSummary {
        mean: m,
        std: s,
        n_finite: finite.len(),
        n_neg_inf: values.len() - finite.len(),
    })
}

/// One JSON document per diagnostics run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub format_version: u32,
    pub task: String,
    /// SHA-256 of each checkpoint file, keyed by label.
    pub checkpoints: BTreeMap<String, String>,
    pub seeds: BTreeMap<String, u64>,
    pub evaluators: BTreeMap<String, EvaluatorInfo>,
    pub metrics: BTreeMap<String, serde_json::Value>,
    pub warnings: Vec<String>,
}

impl DiagnosticsReport {
    pub fn new(task: &str) -> Self {
        Self {
            format_version: REPORT_FORMAT_VERSION,
            task: task.to_string(),
            checkpoints: BTreeMap::new(),
            seeds: BTreeMap::new(),
            evaluators: BTreeMap::new(),
            metrics: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    pub fn insert_metric<T: Serialize>(&mut self, name: &str, block: &T) -> Result<()> {
        self.metrics.insert(name.to_string(), serde_json::to_value(block)?);
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}
