use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{wrong_form, EstimatorKind, LogRatio, RatioForm};
use crate::error::{check_dim, Error, Result};
use crate::numcore::MlpNetwork;
use crate::tasks::TaskId;

/// Per-feature z-score statistics computed on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    pub theta_mean: Vec<f64>,
    pub theta_std: Vec<f64>,
}

fn column_stats(data: ArrayView2<'_, f64>) -> (Vec<f64>, Vec<f64>) {
    let n = data.nrows().max(1) as f64;
    let mut means = Vec::with_capacity(data.ncols());
    let mut stds = Vec::with_capacity(data.ncols());
    for col in data.axis_iter(Axis(1)) {
        let m = col.sum() / n;
        let v = col.iter().map(|c| (c - m) * (c - m)).sum::<f64>() / n;
        let s = v.sqrt();
        means.push(m);
        // constant features are passed through unscaled
        stds.push(if s.is_finite() && s > 1e-12 { s } else { 1.0 });
    }
    (means, stds)
}

impl Standardization {
    pub fn fit(thetas: ArrayView2<'_, f64>, xs: ArrayView2<'_, f64>) -> Self {
        let (theta_mean, theta_std) = column_stats(thetas);
        let (x_mean, x_std) = column_stats(xs);
        Self {
            x_mean,
            x_std,
            theta_mean,
            theta_std,
        }
    }

    pub fn identity(theta_dim: usize, x_dim: usize) -> Self {
        Self {
            x_mean: vec![0.0; x_dim],
            x_std: vec![1.0; x_dim],
            theta_mean: vec![0.0; theta_dim],
            theta_std: vec![1.0; theta_dim],
        }
    }

    pub fn theta_dim(&self) -> usize {
        self.theta_mean.len()
    }

    pub fn x_dim(&self) -> usize {
        self.x_mean.len()
    }

    fn validate(&self) -> Result<()> {
        check_dim("x standardization", self.x_mean.len(), self.x_std.len())?;
        check_dim("theta standardization", self.theta_mean.len(), self.theta_std.len())?;
        let ok = |v: &f64| v.is_finite();
        if !self.x_mean.iter().chain(&self.theta_mean).all(ok)
            || !self
                .x_std
                .iter()
                .chain(&self.theta_std)
                .all(|s| s.is_finite() && *s > 0.0)
        {
            return Err(Error::invalid("standardization needs finite means and positive stds"));
        }
        Ok(())
    }

    pub(crate) fn write_x(&self, x: &[f64], out: &mut [f64]) {
        for (o, (v, (m, s))) in out.iter_mut().zip(x.iter().zip(self.x_mean.iter().zip(&self.x_std))) {
            *o = (v - m) / s;
        }
    }

    pub(crate) fn write_theta(&self, theta: &[f64], out: &mut [f64]) {
        for (o, (v, (m, s))) in out
            .iter_mut()
            .zip(theta.iter().zip(self.theta_mean.iter().zip(&self.theta_std)))
        {
            *o = (v - m) / s;
        }
    }
}

/// Provenance of a trained estimator, stored in its checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub n_train: usize,
    pub n_val: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioEstimator {
    pub kind: EstimatorKind,
    pub task: TaskId,
    pub net: MlpNetwork,
    pub standardization: Standardization,
    pub training: TrainingMeta,
    /// Evaluate DNRE as `(ℓ(x,θ,θ') - ℓ(x,θ',θ)) / 2`. This is an evaluation
    /// convenience, not part of the trained method; off by default.
    pub antisymmetric: bool,
}

impl EstimatorKind {
    pub fn input_dim(&self, theta_dim: usize, x_dim: usize) -> usize {
        match self {
            EstimatorKind::Dnre => x_dim + 2 * theta_dim,
            _ => x_dim + theta_dim,
        }
    }
}

impl RatioEstimator {
    pub fn new(
        kind: EstimatorKind,
        task: TaskId,
        net: MlpNetwork,
        standardization: Standardization,
        training: TrainingMeta,
    ) -> Result<Self> {
        standardization.validate()?;
        check_dim(
            "estimator input layout",
            kind.input_dim(standardization.theta_dim(), standardization.x_dim()),
            net.input_dim(),
        )?;
        Ok(Self {
            kind,
            task,
            net,
            standardization,
            training,
            antisymmetric: false,
        })
    }

    fn check_x_theta(&self, x: &[f64], theta: &[f64]) -> Result<()> {
        check_dim("x", self.x_dim(), x.len())?;
        check_dim("theta", self.theta_dim(), theta.len())
    }

    /// Standardized network input `[x, θ]` or `[x, θ, θ']`.
    pub fn encode(&self, x: &[f64], theta: &[f64], theta_prime: Option<&[f64]>) -> Vec<f64> {
        let (xd, td) = (self.x_dim(), self.theta_dim());
        let mut input = vec![0.0; self.net.input_dim()];
        self.standardization.write_x(x, &mut input[..xd]);
        self.standardization.write_theta(theta, &mut input[xd..xd + td]);
        if let Some(tp) = theta_prime {
            self.standardization.write_theta(tp, &mut input[xd + td..]);
        }
        input
    }

    /// Rows `[x, θ_i]` (evidence) or `[x, θ, θ'_i]` (pairwise, `fixed` = θ,
    /// `thetas` = bank).
    fn encode_rows(
        &self,
        x: &[f64],
        fixed: Option<&[f64]>,
        thetas: ArrayView2<'_, f64>,
        fixed_first: bool,
    ) -> Array2<f64> {
        let (xd, td) = (self.x_dim(), self.theta_dim());
        let mut out = Array2::zeros((thetas.nrows(), self.net.input_dim()));
        let mut xz = vec![0.0; xd];
        self.standardization.write_x(x, &mut xz);
        let mut fz = vec![0.0; td];
        if let Some(f) = fixed {
            self.standardization.write_theta(f, &mut fz);
        }
        for (mut row, theta) in out.rows_mut().into_iter().zip(thetas.rows()) {
            let row = row.as_slice_mut().expect("standard layout");
            row[..xd].copy_from_slice(&xz);
            let theta = theta.to_vec();
            match fixed {
                None => self.standardization.write_theta(&theta, &mut row[xd..]),
                Some(_) if fixed_first => {
                    row[xd..xd + td].copy_from_slice(&fz);
                    self.standardization.write_theta(&theta, &mut row[xd + td..]);
                }
                Some(_) => {
                    self.standardization.write_theta(&theta, &mut row[xd..xd + td]);
                    row[xd + td..].copy_from_slice(&fz);
                }
            }
        }
        out
    }

    /// Log-ratio as exposed to users: `θ'` is required for DNRE and rejected
    /// for NRE/BNRE. Use [`LogRatio::log_ratio_pairwise`] for the two-pass
    /// pairwise composition of an evidence model.
    pub fn log_ratio(&self, x: &[f64], theta: &[f64], theta_prime: Option<&[f64]>) -> Result<f64> {
        match (self.kind.form(), theta_prime) {
            (RatioForm::Evidence, None) => self.log_ratio_evidence(x, theta),
            (RatioForm::Pairwise, Some(tp)) => self.log_ratio_direct(x, theta, tp),
            (RatioForm::Evidence, Some(_)) => Err(Error::ContractViolation(format!(
                "{} estimators take no θ'; request the pairwise two-pass ratio explicitly",
                self.kind.label()
            ))),
            (RatioForm::Pairwise, None) => Err(Error::ContractViolation("DNRE requires a reference θ'".into())),
        }
    }

    fn raw_direct(&self, x: &[f64], theta: &[f64], theta_prime: &[f64]) -> Result<f64> {
        self.net.forward(&self.encode(x, theta, Some(theta_prime)))
    }
}

impl LogRatio for RatioEstimator {
    fn form(&self) -> RatioForm {
        self.kind.form()
    }

    fn theta_dim(&self) -> usize {
        self.standardization.theta_dim()
    }

    fn x_dim(&self) -> usize {
        self.standardization.x_dim()
    }

    fn log_ratio_evidence(&self, x: &[f64], theta: &[f64]) -> Result<f64> {
        if self.form() != RatioForm::Evidence {
            return Err(wrong_form(RatioForm::Evidence));
        }
        self.check_x_theta(x, theta)?;
        self.net.forward(&self.encode(x, theta, None))
    }

    fn log_ratio_direct(&self, x: &[f64], theta: &[f64], theta_prime: &[f64]) -> Result<f64> {
        if self.form() != RatioForm::Pairwise {
            return Err(wrong_form(RatioForm::Pairwise));
        }
        self.check_x_theta(x, theta)?;
        check_dim("theta'", self.theta_dim(), theta_prime.len())?;
        let forward = self.raw_direct(x, theta, theta_prime)?;
        if self.antisymmetric {
            Ok(0.5 * (forward - self.raw_direct(x, theta_prime, theta)?))
        } else {
            Ok(forward)
        }
    }

    fn grad_theta(&self, x: &[f64], theta: &[f64], theta_prime: Option<&[f64]>) -> Result<(f64, Vec<f64>)> {
        self.check_x_theta(x, theta)?;
        let (xd, td) = (self.x_dim(), self.theta_dim());
        let scale = &self.standardization.theta_std;
        match (self.form(), theta_prime) {
            (RatioForm::Evidence, None) => {
                let input = self.encode(x, theta, None);
                let value = self.net.forward(&input)?;
                let (_, g) = self.net.backward(&input, 1.0)?;
                Ok((value, g[xd..].iter().zip(scale).map(|(g, s)| g / s).collect()))
            }
            (RatioForm::Pairwise, Some(tp)) => {
                check_dim("theta'", td, tp.len())?;
                let input = self.encode(x, theta, Some(tp));
                let value = self.net.forward(&input)?;
                let (_, g) = self.net.backward(&input, 1.0)?;
                let mut grad: Vec<f64> = g[xd..xd + td].iter().zip(scale).map(|(g, s)| g / s).collect();
                if !self.antisymmetric {
                    return Ok((value, grad));
                }
                let swapped = self.encode(x, tp, Some(theta));
                let back = self.net.forward(&swapped)?;
                let (_, gs) = self.net.backward(&swapped, 1.0)?;
                for (g, (b, s)) in grad.iter_mut().zip(gs[xd + td..].iter().zip(scale)) {
                    *g = 0.5 * (*g - b / s);
                }
                Ok((0.5 * (value - back), grad))
            }
            (RatioForm::Evidence, Some(_)) => Err(wrong_form(RatioForm::Pairwise)),
            (RatioForm::Pairwise, None) => Err(Error::ContractViolation("DNRE gradient requires θ'".into())),
        }
    }

    fn log_ratio_bank(&self, x: &[f64], theta: &[f64], bank: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        if self.form() != RatioForm::Pairwise {
            return Err(wrong_form(RatioForm::Pairwise));
        }
        self.check_x_theta(x, theta)?;
        check_dim("theta' bank", self.theta_dim(), bank.ncols())?;
        let forward = self
            .net
            .forward_batch(self.encode_rows(x, Some(theta), bank, true).view())?;
        if !self.antisymmetric {
            return Ok(forward.to_vec());
        }
        let back = self
            .net
            .forward_batch(self.encode_rows(x, Some(theta), bank, false).view())?;
        Ok(forward.iter().zip(back.iter()).map(|(f, b)| 0.5 * (f - b)).collect())
    }

    fn log_ratio_evidence_batch(&self, x: &[f64], thetas: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        if self.form() != RatioForm::Evidence {
            return Err(wrong_form(RatioForm::Evidence));
        }
        check_dim("x", self.x_dim(), x.len())?;
        check_dim("theta", self.theta_dim(), thetas.ncols())?;
        Ok(self
            .net
            .forward_batch(self.encode_rows(x, None, thetas, true).view())?
            .to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{Activation, Rng};
    use ndarray::array;

    fn estimator(kind: EstimatorKind, seed: u64) -> RatioEstimator {
        let st = Standardization {
            x_mean: vec![0.1, -0.2],
            x_std: vec![1.5, 0.5],
            theta_mean: vec![0.3, 0.0],
            theta_std: vec![0.7, 2.0],
        };
        let net = MlpNetwork::new(&[kind.input_dim(2, 2), 16, 16, 1], Activation::Elu, &mut Rng::new(seed)).unwrap();
        RatioEstimator::new(kind, TaskId::TwoMoons, net, st, TrainingMeta::default()).unwrap()
    }

    #[test]
    fn zero_network_gives_zero_log_ratio() {
        let net = MlpNetwork::zeros(&[3, 8, 1], Activation::Elu).unwrap();
        let est = RatioEstimator::new(
            EstimatorKind::Dnre,
            TaskId::Gauss1d { sigma: 0.5 },
            net,
            Standardization::identity(1, 1),
            TrainingMeta::default(),
        )
        .unwrap();
        assert_eq!(est.log_ratio(&[0.4], &[1.0], Some(&[-2.0])).unwrap(), 0.0);
    }

    #[test]
    fn layout_is_validated() {
        let net = MlpNetwork::zeros(&[3, 8, 1], Activation::Elu).unwrap();
        let err = RatioEstimator::new(
            EstimatorKind::Nre,
            TaskId::Gauss1d { sigma: 0.5 },
            net,
            Standardization::identity(1, 1),
            TrainingMeta::default(),
        );
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn theta_prime_presence_follows_kind() {
        let nre = estimator(EstimatorKind::Nre, 1);
        assert!(matches!(
            nre.log_ratio(&[0.0, 0.0], &[0.1, 0.2], Some(&[0.0, 0.0])),
            Err(Error::ContractViolation(_))
        ));
        let dnre = estimator(EstimatorKind::Dnre, 1);
        assert!(matches!(
            dnre.log_ratio(&[0.0, 0.0], &[0.1, 0.2], None),
            Err(Error::ContractViolation(_))
        ));
        assert!(matches!(
            dnre.log_ratio(&[0.0], &[0.1, 0.2], Some(&[0.0, 0.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn two_pass_with_equal_parameters_is_zero() {
        let nre = estimator(EstimatorKind::Bnre { lambda: 1.0 }, 2);
        assert_eq!(
            nre.log_ratio_pairwise(&[0.2, 0.1], &[0.3, -0.4], &[0.3, -0.4]).unwrap(),
            0.0
        );
        let a = nre.log_ratio(&[0.2, 0.1], &[0.3, -0.4], None).unwrap();
        let b = nre.log_ratio(&[0.2, 0.1], &[-0.1, 0.4], None).unwrap();
        let pair = nre.log_ratio_pairwise(&[0.2, 0.1], &[0.3, -0.4], &[-0.1, 0.4]).unwrap();
        assert_eq!(pair, a - b);
    }

    #[test]
    fn batched_paths_match_single_evaluations() {
        let bank = array![[0.1, 0.2], [-0.3, 0.4], [0.5, -0.6]];
        let x = [0.05, -0.02];
        let theta = [0.2, 0.2];
        for antisymmetric in [false, true] {
            let mut dnre = estimator(EstimatorKind::Dnre, 3);
            dnre.antisymmetric = antisymmetric;
            let batch = dnre.log_ratio_bank(&x, &theta, bank.view()).unwrap();
            for (row, v) in bank.rows().into_iter().zip(batch) {
                let single = dnre.log_ratio_direct(&x, &theta, &row.to_vec()).unwrap();
                assert!((single - v).abs() < 1e-12);
            }
        }
        let nre = estimator(EstimatorKind::Nre, 4);
        let batch = nre.log_ratio_evidence_batch(&x, bank.view()).unwrap();
        for (row, v) in bank.rows().into_iter().zip(batch) {
            assert!((nre.log_ratio_evidence(&x, &row.to_vec()).unwrap() - v).abs() < 1e-12);
        }
    }

    #[test]
    fn antisymmetric_flag_is_exactly_antisymmetric() {
        let mut dnre = estimator(EstimatorKind::Dnre, 5);
        dnre.antisymmetric = true;
        let x = [0.3, 0.1];
        let a = dnre.log_ratio_direct(&x, &[0.1, 0.2], &[0.4, -0.5]).unwrap();
        let b = dnre.log_ratio_direct(&x, &[0.4, -0.5], &[0.1, 0.2]).unwrap();
        assert_eq!(a, -b);
    }

    #[test]
    fn theta_gradient_matches_finite_differences() {
        let x = [0.3, -0.1];
        let theta = [0.2, -0.4];
        let tp = [-0.6, 0.3];
        let h = 1e-6;
        for (kind, antisymmetric) in [
            (EstimatorKind::Nre, false),
            (EstimatorKind::Dnre, false),
            (EstimatorKind::Dnre, true),
        ] {
            let mut est = estimator(kind, 6);
            est.antisymmetric = antisymmetric;
            let prime = (kind == EstimatorKind::Dnre).then_some(&tp[..]);
            let f = |t: &[f64]| match prime {
                Some(p) => est.log_ratio_direct(&x, t, p).unwrap(),
                None => est.log_ratio_evidence(&x, t).unwrap(),
            };
            let (value, grad) = est.grad_theta(&x, &theta, prime).unwrap();
            assert!((value - f(&theta)).abs() < 1e-12);
            for i in 0..2 {
                let mut up = theta;
                let mut dn = theta;
                up[i] += h;
                dn[i] -= h;
                let fd = (f(&up) - f(&dn)) / (2.0 * h);
                assert!(
                    (fd - grad[i]).abs() <= 1e-6 * (1.0 + fd.abs()),
                    "{kind:?} {i}: {fd} vs {}",
                    grad[i]
                );
            }
        }
    }

    #[test]
    fn constant_features_get_unit_scale() {
        let thetas = array![[1.0, 2.0], [1.0, 4.0]];
        let xs = array![[0.0], [2.0]];
        let st = Standardization::fit(thetas.view(), xs.view());
        assert_eq!(st.theta_std, vec![1.0, 1.0]);
        assert_eq!(st.theta_mean, vec![1.0, 3.0]);
        assert_eq!(st.x_std, vec![1.0]);
        let xs = array![[0.0], [4.0]];
        assert_eq!(Standardization::fit(thetas.view(), xs.view()).x_std, vec![2.0]);
    }
}
