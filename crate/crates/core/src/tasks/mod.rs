//! Benchmark problems: priors, simulators and, where tractable, exact
//! likelihoods and reference posteriors.
//!
//! Generative models (θ is the parameter, x the observation):
//!
//! * `gauss1d(σ)`: θ ~ N(0, σ²), x ~ N(θ, σ²). Posterior N(x/2, σ²/2).
//! * `two_moons`: θ ~ U(-1, 1)², a ~ U(-π/2, π/2), r ~ N(0.1, 0.01²),
//!   p = (r cos a + 0.25, r sin a),
//!   x = p + (-|θ₁ + θ₂| / √2, (-θ₁ + θ₂) / √2).
//! * `gaussian_linear`: θ ~ N(0, 0.1 I₁₀), x ~ N(θ, 0.1 I₁₀).
//!   Posterior N(x/2, 0.05 I).
//! * `gaussian_linear_uniform`: θ ~ U(-1, 1)¹⁰, x ~ N(θ, 0.1 I₁₀).
//! * `gaussian_mixture`: θ ~ U(-10, 10)², x ~ ½ N(θ, I) + ½ N(θ, 0.01 I).
//!
//! The last four follow the public SBI benchmark task definitions.
//!
//! Tasks without a simulator here (priors recorded for later extension):
//! Lotka-Volterra θ₁,θ₃ ~ LogNormal(-0.125, 0.5), θ₂,θ₄ ~ LogNormal(-3, 0.5);
//! SIR θ₁ ~ LogNormal(log 0.4, 0.5), θ₂ ~ LogNormal(log 1/8, 0.2);
//! SLCP and SLCP-distractors θ ~ U(-3, 3)⁵; Bernoulli GLM (and raw variant)
//! θ₁ ~ N(0, 2), θ₂..₁₀ ~ N(0, (FᵀF)⁻¹) with the banded F of the benchmark.

pub mod dataset;
pub mod prior;
pub mod reference;

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use dataset::{generate_dataset, Dataset, DatasetMeta};
pub use prior::PriorSpec;
pub use reference::DensityGrid;

use crate::error::{check_dim, Error, Result};
use crate::numcore::math::{log_normal_interval, log_sum_exp, normal_cdf, normal_log_pdf, normal_quantile, LN_2PI};
use crate::numcore::Rng;

const GL_DIM: usize = 10;
const GL_NOISE_VAR: f64 = 0.1;
const MOONS_R_MEAN: f64 = 0.1;
const MOONS_R_STD: f64 = 0.01;
const GM_STDS: [f64; 2] = [1.0, 0.1];

/// Serializable task identifier, stored in datasets and checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum TaskId {
    Gauss1d { sigma: f64 },
    TwoMoons,
    GaussianLinear,
    GaussianLinearUniform,
    GaussianMixture,
}

impl TaskId {
    pub fn name(&self) -> &'static str {
        match self {
            TaskId::Gauss1d { .. } => "gauss1d",
            TaskId::TwoMoons => "two_moons",
            TaskId::GaussianLinear => "gaussian_linear",
            TaskId::GaussianLinearUniform => "gaussian_linear_uniform",
            TaskId::GaussianMixture => "gaussian_mixture",
        }
    }

    /// Parse a task name; `sigma` is required for `gauss1d` only.
    pub fn parse(name: &str, sigma: Option<f64>) -> Result<Self> {
        let id = match name {
            "gauss1d" => TaskId::Gauss1d {
                sigma: sigma.ok_or_else(|| Error::invalid("gauss1d requires sigma"))?,
            },
            "two_moons" => TaskId::TwoMoons,
            "gaussian_linear" => TaskId::GaussianLinear,
            "gaussian_linear_uniform" => TaskId::GaussianLinearUniform,
            "gaussian_mixture" => TaskId::GaussianMixture,
            other => return Err(Error::invalid(format!("unknown task `{other}`"))),
        };
        Ok(id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub id: TaskId,
    pub theta_dim: usize,
    pub x_dim: usize,
    pub prior: PriorSpec,
}

impl TaskSpec {
    pub fn from_id(id: &TaskId) -> Result<Self> {
        match *id {
            TaskId::Gauss1d { sigma } => Self::gauss1d(sigma),
            TaskId::TwoMoons => Ok(Self::two_moons()),
            TaskId::GaussianLinear => Ok(Self::gaussian_linear()),
            TaskId::GaussianLinearUniform => Ok(Self::gaussian_linear_uniform()),
            TaskId::GaussianMixture => Ok(Self::gaussian_mixture()),
        }
    }

    pub fn gauss1d(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
        }
        Ok(Self {
            id: TaskId::Gauss1d { sigma },
            theta_dim: 1,
            x_dim: 1,
            prior: PriorSpec::gaussian(vec![0.0], vec![sigma])?,
        })
    }

    pub fn two_moons() -> Self {
        Self {
            id: TaskId::TwoMoons,
            theta_dim: 2,
            x_dim: 2,
            prior: PriorSpec::uniform_box(2, -1.0, 1.0).expect("valid box"),
        }
    }

    pub fn gaussian_linear() -> Self {
        Self {
            id: TaskId::GaussianLinear,
            theta_dim: GL_DIM,
            x_dim: GL_DIM,
            prior: PriorSpec::gaussian(vec![0.0; GL_DIM], vec![GL_NOISE_VAR.sqrt(); GL_DIM]).expect("valid"),
        }
    }

    pub fn gaussian_linear_uniform() -> Self {
        Self {
            id: TaskId::GaussianLinearUniform,
            theta_dim: GL_DIM,
            x_dim: GL_DIM,
            prior: PriorSpec::uniform_box(GL_DIM, -1.0, 1.0).expect("valid box"),
        }
    }

    pub fn gaussian_mixture() -> Self {
        Self {
            id: TaskId::GaussianMixture,
            theta_dim: 2,
            x_dim: 2,
            prior: PriorSpec::uniform_box(2, -10.0, 10.0).expect("valid box"),
        }
    }

    pub fn name(&self) -> &'static str {
        self.id.name()
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        check_dim("theta", self.theta_dim, theta.len())
    }

    fn check_x(&self, x: &[f64]) -> Result<()> {
        check_dim("x", self.x_dim, x.len())
    }

    /// One stochastic simulation at `theta`.
    pub fn simulate(&self, theta: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        let x = match self.id {
            TaskId::Gauss1d { sigma } => vec![theta[0] + sigma * rng.normal()],
            TaskId::TwoMoons => {
                let a = rng.uniform_in(-PI / 2.0, PI / 2.0);
                let r = MOONS_R_MEAN + MOONS_R_STD * rng.normal();
                two_moons_forward(theta, a, r)
            }
            TaskId::GaussianLinear | TaskId::GaussianLinearUniform => {
                let s = GL_NOISE_VAR.sqrt();
                theta.iter().map(|t| t + s * rng.normal()).collect()
            }
            TaskId::GaussianMixture => {
                let s = if rng.uniform() < 0.5 { GM_STDS[0] } else { GM_STDS[1] };
                theta.iter().map(|t| t + s * rng.normal()).collect()
            }
        };
        Ok(x)
    }

    /// Exact `log p(x | theta)`.
    pub fn log_likelihood(&self, x: &[f64], theta: &[f64]) -> Result<f64> {
        self.check_x(x)?;
        self.check_theta(theta)?;
        let v = match self.id {
            TaskId::Gauss1d { sigma } => normal_log_pdf(x[0], theta[0], sigma),
            TaskId::TwoMoons => two_moons_log_likelihood(x, theta),
            TaskId::GaussianLinear | TaskId::GaussianLinearUniform => {
                let s = GL_NOISE_VAR.sqrt();
                x.iter().zip(theta).map(|(xi, ti)| normal_log_pdf(*xi, *ti, s)).sum()
            }
            TaskId::GaussianMixture => {
                let sq: f64 = x.iter().zip(theta).map(|(a, b)| (a - b) * (a - b)).sum();
                let d = self.x_dim as f64;
                let terms: Vec<f64> = GM_STDS
                    .iter()
                    .map(|s| 0.5f64.ln() - 0.5 * sq / (s * s) - d * s.ln() - 0.5 * d * LN_2PI)
                    .collect();
                log_sum_exp(&terms)
            }
        };
        Ok(v)
    }

    /// Gradient of `log p(x | theta)` with respect to theta.
    pub fn grad_log_likelihood(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        self.check_x(x)?;
        self.check_theta(theta)?;
        let g = match self.id {
            TaskId::Gauss1d { sigma } => vec![(x[0] - theta[0]) / (sigma * sigma)],
            TaskId::GaussianLinear | TaskId::GaussianLinearUniform => {
                x.iter().zip(theta).map(|(a, b)| (a - b) / GL_NOISE_VAR).collect()
            }
            TaskId::GaussianMixture => {
                let sq: f64 = x.iter().zip(theta).map(|(a, b)| (a - b) * (a - b)).sum();
                let d = self.x_dim as f64;
                let terms: Vec<f64> = GM_STDS.iter().map(|s| -0.5 * sq / (s * s) - d * s.ln()).collect();
                let norm = log_sum_exp(&terms);
                let scale: f64 = GM_STDS
                    .iter()
                    .zip(&terms)
                    .map(|(s, t)| (t - norm).exp() / (s * s))
                    .sum();
                x.iter().zip(theta).map(|(a, b)| (a - b) * scale).collect()
            }
            TaskId::TwoMoons => {
                // piecewise smooth; central differences
                let h = 1e-6;
                let mut g = Vec::with_capacity(2);
                let mut t = theta.to_vec();
                for k in 0..2 {
                    t[k] = theta[k] + h;
                    let up = two_moons_log_likelihood(x, &t);
                    t[k] = theta[k] - h;
                    let down = two_moons_log_likelihood(x, &t);
                    t[k] = theta[k];
                    g.push((up - down) / (2.0 * h));
                }
                g
            }
        };
        Ok(g)
    }

    /// Exact `log p(x|theta) - log p(x|theta')`.
    pub fn log_ratio(&self, x: &[f64], theta: &[f64], theta_prime: &[f64]) -> Result<f64> {
        Ok(self.log_likelihood(x, theta)? - self.log_likelihood(x, theta_prime)?)
    }

    /// Closed-form `log p(x)` where available.
    pub fn log_evidence(&self, x: &[f64]) -> Result<Option<f64>> {
        self.check_x(x)?;
        let v = match self.id {
            TaskId::Gauss1d { sigma } => Some(normal_log_pdf(x[0], 0.0, sigma * 2f64.sqrt())),
            TaskId::GaussianLinear => {
                let s = (2.0 * GL_NOISE_VAR).sqrt();
                Some(x.iter().map(|xi| normal_log_pdf(*xi, 0.0, s)).sum())
            }
            TaskId::GaussianLinearUniform => {
                // ∫ N(x; θ, s²) U(θ; -1, 1) dθ = [Φ((1-x)/s) - Φ((-1-x)/s)] / 2 per dimension
                let s = GL_NOISE_VAR.sqrt();
                Some(
                    x.iter()
                        .map(|xi| log_normal_interval((-1.0 - xi) / s, (1.0 - xi) / s) - 2f64.ln())
                        .sum(),
                )
            }
            TaskId::GaussianMixture => {
                let area_log = self.prior.entropy();
                let terms: Vec<f64> = GM_STDS
                    .iter()
                    .map(|s| {
                        0.5f64.ln()
                            + x.iter()
                                .map(|xi| log_normal_interval((-10.0 - xi) / s, (10.0 - xi) / s))
                                .sum::<f64>()
                    })
                    .collect();
                Some(log_sum_exp(&terms) - area_log)
            }
            TaskId::TwoMoons => None,
        };
        Ok(v)
    }

    /// Normalized analytic posterior density where a closed form exists.
    pub fn analytic_log_posterior(&self, x: &[f64], theta: &[f64]) -> Result<Option<f64>> {
        self.check_x(x)?;
        self.check_theta(theta)?;
        let v = match self.id {
            TaskId::Gauss1d { sigma } => Some(normal_log_pdf(theta[0], x[0] / 2.0, sigma / 2f64.sqrt())),
            TaskId::GaussianLinear => {
                let s = (GL_NOISE_VAR / 2.0).sqrt();
                Some(theta.iter().zip(x).map(|(t, xi)| normal_log_pdf(*t, xi / 2.0, s)).sum())
            }
            TaskId::GaussianLinearUniform => {
                // Per-dimension truncated normal:
                // p(θᵢ|x) = N(θᵢ; xᵢ, s²) / [Φ((1-xᵢ)/s) - Φ((-1-xᵢ)/s)] on [-1, 1].
                if !self.prior.in_support(theta) {
                    Some(f64::NEG_INFINITY)
                } else {
                    let s = GL_NOISE_VAR.sqrt();
                    Some(
                        theta
                            .iter()
                            .zip(x)
                            .map(|(t, xi)| {
                                normal_log_pdf(*t, *xi, s) - log_normal_interval((-1.0 - xi) / s, (1.0 - xi) / s)
                            })
                            .sum(),
                    )
                }
            }
            TaskId::TwoMoons | TaskId::GaussianMixture => None,
        };
        Ok(v)
    }

    /// Reference posterior samples: exact draws for conjugate tasks, dense
    /// grid resampling for the 2-D tasks without a closed form.
    pub fn sample_posterior(&self, x: &[f64], n: usize, rng: &mut Rng) -> Result<Array2<f64>> {
        self.check_x(x)?;
        let mut out = Array2::zeros((n, self.theta_dim));
        match self.id {
            TaskId::Gauss1d { sigma } => {
                let s = sigma / 2f64.sqrt();
                out.mapv_inplace(|_| x[0] / 2.0 + s * rng.normal());
            }
            TaskId::GaussianLinear => {
                let s = (GL_NOISE_VAR / 2.0).sqrt();
                for mut row in out.rows_mut() {
                    for (dst, xi) in row.iter_mut().zip(x) {
                        *dst = xi / 2.0 + s * rng.normal();
                    }
                }
            }
            TaskId::GaussianLinearUniform => {
                let s = GL_NOISE_VAR.sqrt();
                for mut row in out.rows_mut() {
                    for (dst, xi) in row.iter_mut().zip(x) {
                        let lo = normal_cdf((-1.0 - xi) / s);
                        let hi = normal_cdf((1.0 - xi) / s);
                        let u = lo + (hi - lo) * rng.uniform();
                        *dst = (xi + s * normal_quantile(u)).clamp(-1.0, 1.0);
                    }
                }
            }
            TaskId::TwoMoons | TaskId::GaussianMixture => {
                return Ok(self.reference_grid(x, reference::DEFAULT_RESOLUTION)?.sample(n, rng));
            }
        }
        Ok(out)
    }

    /// Grid of `log p(x|θ) + log p(θ)` over the prior box (2-D tasks).
    pub fn reference_grid(&self, x: &[f64], resolution: usize) -> Result<DensityGrid> {
        self.check_x(x)?;
        if self.theta_dim != 2 {
            return Err(Error::invalid("reference grids are only defined for 2-D parameters"));
        }
        let (low, high) = self.prior.plotting_box();
        DensityGrid::evaluate([low[0], low[1]], [high[0], high[1]], resolution, |t| {
            self.log_likelihood(x, t).unwrap_or(f64::NEG_INFINITY) + self.prior.log_density(t)
        })
    }
}

fn two_moons_forward(theta: &[f64], a: f64, r: f64) -> Vec<f64> {
    let p = [r * a.cos() + 0.25, r * a.sin()];
    let z0 = (theta[0] + theta[1]) * FRAC_1_SQRT_2;
    let z1 = (-theta[0] + theta[1]) * FRAC_1_SQRT_2;
    vec![p[0] - z0.abs(), p[1] + z1]
}

/// Density of x via the polar change of variables `u = r (cos a, sin a)`
/// with Jacobian `|r|`; `cos a > 0` fixes the sign of r from `u₀`.
fn two_moons_log_likelihood(x: &[f64], theta: &[f64]) -> f64 {
    let z0 = (theta[0] + theta[1]) * FRAC_1_SQRT_2;
    let z1 = (-theta[0] + theta[1]) * FRAC_1_SQRT_2;
    let u = [x[0] + z0.abs() - 0.25, x[1] - z1];
    let rho = u[0].hypot(u[1]).max(f64::MIN_POSITIVE);
    let r = if u[0] >= 0.0 { rho } else { -rho };
    -PI.ln() + normal_log_pdf(r, MOONS_R_MEAN, MOONS_R_STD) - rho.ln()
}
