use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::numcore::math::{normal_log_pdf, LN_2PI};
use crate::numcore::Rng;

/// Factorized prior over the parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorSpec {
    /// Uniform on the closed box `[low, high]`.
    Uniform {
        low: Vec<f64>,
        high: Vec<f64>,
    },
    DiagonalGaussian {
        mean: Vec<f64>,
        std: Vec<f64>,
    },
}

impl PriorSpec {
    pub fn uniform(low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        check_dim("prior bounds", low.len(), high.len())?;
        if low.is_empty()
            || low
                .iter()
                .zip(&high)
                .any(|(l, h)| !(l < h) || !l.is_finite() || !h.is_finite())
        {
            return Err(Error::invalid("uniform prior needs finite bounds with low < high"));
        }
        Ok(PriorSpec::Uniform { low, high })
    }

    pub fn uniform_box(dim: usize, low: f64, high: f64) -> Result<Self> {
        Self::uniform(vec![low; dim], vec![high; dim])
    }

    pub fn gaussian(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        check_dim("prior moments", mean.len(), std.len())?;
        if mean.is_empty() || std.iter().any(|s| !(*s > 0.0) || !s.is_finite()) || mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::invalid("gaussian prior needs finite means and positive stds"));
        }
        Ok(PriorSpec::DiagonalGaussian { mean, std })
    }

    pub fn dim(&self) -> usize {
        match self {
            PriorSpec::Uniform { low, .. } => low.len(),
            PriorSpec::DiagonalGaussian { mean, .. } => mean.len(),
        }
    }

    pub fn in_support(&self, theta: &[f64]) -> bool {
        if theta.len() != self.dim() || theta.iter().any(|t| !t.is_finite()) {
            return false;
        }
        match self {
            PriorSpec::Uniform { low, high } => theta
                .iter()
                .zip(low.iter().zip(high))
                .all(|(t, (l, h))| *t >= *l && *t <= *h),
            PriorSpec::DiagonalGaussian { .. } => true,
        }
    }

    /// Normalized log density, `-inf` outside the support.
    pub fn log_density(&self, theta: &[f64]) -> f64 {
        if !self.in_support(theta) {
            return f64::NEG_INFINITY;
        }
        match self {
            PriorSpec::Uniform { low, high } => -low.iter().zip(high).map(|(l, h)| (h - l).ln()).sum::<f64>(),
            PriorSpec::DiagonalGaussian { mean, std } => theta
                .iter()
                .zip(mean.iter().zip(std))
                .map(|(t, (m, s))| normal_log_pdf(*t, *m, *s))
                .sum(),
        }
    }

    /// Gradient of the log density inside the support.
    pub fn grad_log_density(&self, theta: &[f64]) -> Vec<f64> {
        match self {
            PriorSpec::Uniform { .. } => vec![0.0; theta.len()],
            PriorSpec::DiagonalGaussian { mean, std } => theta
                .iter()
                .zip(mean.iter().zip(std))
                .map(|(t, (m, s))| -(t - m) / (s * s))
                .collect(),
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> Vec<f64> {
        match self {
            PriorSpec::Uniform { low, high } => low.iter().zip(high).map(|(l, h)| rng.uniform_in(*l, *h)).collect(),
            PriorSpec::DiagonalGaussian { mean, std } => {
                mean.iter().zip(std).map(|(m, s)| m + s * rng.normal()).collect()
            }
        }
    }

    pub fn sample_n(&self, n: usize, rng: &mut Rng) -> Array2<f64> {
        let d = self.dim();
        let mut out = Array2::zeros((n, d));
        for mut row in out.rows_mut() {
            for (dst, v) in row.iter_mut().zip(self.sample(rng)) {
                *dst = v;
            }
        }
        out
    }

    /// Box used for grids: the support for uniform priors, `mean ± 5 std`
    /// otherwise.
    pub fn plotting_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            PriorSpec::Uniform { low, high } => (low.clone(), high.clone()),
            PriorSpec::DiagonalGaussian { mean, std } => (
                mean.iter().zip(std).map(|(m, s)| m - 5.0 * s).collect(),
                mean.iter().zip(std).map(|(m, s)| m + 5.0 * s).collect(),
            ),
        }
    }

    /// Differential entropy, used by closed-form checks.
    pub fn entropy(&self) -> f64 {
        match self {
            PriorSpec::Uniform { low, high } => low.iter().zip(high).map(|(l, h)| (h - l).ln()).sum(),
            PriorSpec::DiagonalGaussian { std, .. } => std.iter().map(|s| 0.5 * (1.0 + LN_2PI) + s.ln()).sum(),
        }
    }
}
