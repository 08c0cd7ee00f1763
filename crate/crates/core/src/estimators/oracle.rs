use super::{wrong_form, LogRatio, RatioForm};
use crate::error::{check_dim, Error, Result};
use crate::tasks::TaskSpec;

/// Exact log ratios computed from the closed-form likelihood: the output of
/// a Bayes-optimal classifier. Used to validate posterior, sampler and
/// diagnostic code independently of training.
#[derive(Debug, Clone)]
pub struct ExactRatio {
    pub task: TaskSpec,
    form: RatioForm,
}

impl ExactRatio {
    /// `log p(x|θ) - log p(x|θ')`.
    pub fn pairwise(task: TaskSpec) -> Self {
        Self {
            task,
            form: RatioForm::Pairwise,
        }
    }

    /// `log p(x|θ) - log p(x)`; needs a closed-form evidence.
    pub fn evidence(task: TaskSpec) -> Result<Self> {
        if task.log_evidence(&vec![0.0; task.x_dim])?.is_none() {
            return Err(Error::MissingOracle {
                task: task.name().to_string(),
                what: "evidence",
            });
        }
        Ok(Self {
            task,
            form: RatioForm::Evidence,
        })
    }

    fn log_evidence(&self, x: &[f64]) -> Result<f64> {
        self.task.log_evidence(x)?.ok_or_else(|| Error::MissingOracle {
            task: self.task.name().to_string(),
            what: "evidence",
        })
    }
}

impl LogRatio for ExactRatio {
    fn form(&self) -> RatioForm {
        self.form
    }

    fn theta_dim(&self) -> usize {
        self.task.theta_dim
    }

    fn x_dim(&self) -> usize {
        self.task.x_dim
    }

    fn log_ratio_evidence(&self, x: &[f64], theta: &[f64]) -> Result<f64> {
        if self.form != RatioForm::Evidence {
            return Err(wrong_form(RatioForm::Evidence));
        }
        Ok(self.task.log_likelihood(x, theta)? - self.log_evidence(x)?)
    }

    fn log_ratio_direct(&self, x: &[f64], theta: &[f64], theta_prime: &[f64]) -> Result<f64> {
        if self.form != RatioForm::Pairwise {
            return Err(wrong_form(RatioForm::Pairwise));
        }
        self.task.log_ratio(x, theta, theta_prime)
    }

    fn grad_theta(&self, x: &[f64], theta: &[f64], theta_prime: Option<&[f64]>) -> Result<(f64, Vec<f64>)> {
        let grad = self.task.grad_log_likelihood(x, theta)?;
        match (self.form, theta_prime) {
            (RatioForm::Evidence, None) => Ok((self.log_ratio_evidence(x, theta)?, grad)),
            (RatioForm::Pairwise, Some(tp)) => {
                check_dim("theta'", self.task.theta_dim, tp.len())?;
                Ok((self.log_ratio_direct(x, theta, tp)?, grad))
            }
            (RatioForm::Evidence, Some(_)) => Err(wrong_form(RatioForm::Pairwise)),
            (RatioForm::Pairwise, None) => Err(Error::ContractViolation("pairwise gradient requires θ'".into())),
        }
    }
}
