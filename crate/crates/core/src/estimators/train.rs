use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{s, Array1, Array2};
use serde::{Deserialize, Serialize};

use super::model::{RatioEstimator, Standardization, TrainingMeta};
use super::EstimatorKind;
use crate::error::{Error, Result};
use crate::numcore::math::sigmoid;
use crate::numcore::{adam_step, bce_with_logits, Activation, AdamConfig, AdamState, MlpNetwork, Rng};
use crate::tasks::{Dataset, PriorSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            batch_size: 256,
            learning_rate: 1e-3,
            hidden: vec![64, 64, 64],
            activation: Activation::Elu,
            validation_fraction: 1.0 / 3.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_size < 2 {
            return Err(Error::invalid("batch size must be at least 2 to form contrast pairs"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::invalid("validation fraction must lie strictly between 0 and 1"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::invalid("hidden layout needs at least one positive width"));
        }
        Ok(())
    }
}

/// Per-epoch mean training loss and validation loss.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossCurve {
    pub train: Vec<f64>,
    pub val: Vec<f64>,
}

impl LossCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for (i, (t, v)) in self.train.iter().zip(&self.val).enumerate() {
            let _ = writeln!(out, "{},{t:?},{v:?}", i + 1);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Batch loss and its derivatives with respect to the positive-label and
/// negative-label logits.
///
/// The loss is `mean BCE(pos, 1) + mean BCE(neg, 0)`, plus for BNRE
/// `λ (mean σ(pos) + mean σ(neg) - 1)²`. For DNRE the positive logits come
/// from `(x, θ, θ')` and the negative ones from `(x, θ', θ)`.
pub fn contrastive_loss(kind: EstimatorKind, pos: &[f64], neg: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if pos.len() != neg.len() || pos.is_empty() {
        return Err(Error::invalid(
            "positive and negative logits must be non-empty and paired",
        ));
    }
    let b = pos.len() as f64;
    let mut loss = 0.0;
    let mut up_pos = Vec::with_capacity(pos.len());
    let mut up_neg = Vec::with_capacity(neg.len());
    for &z in pos {
        let (l, g) = bce_with_logits(z, 1.0)?;
        loss += l / b;
        up_pos.push(g / b);
    }
    for &z in neg {
        let (l, g) = bce_with_logits(z, 0.0)?;
        loss += l / b;
        up_neg.push(g / b);
    }
    if let EstimatorKind::Bnre { lambda } = kind {
        let balance = pos.iter().chain(neg).map(|&z| sigmoid(z)).sum::<f64>() / b - 1.0;
        loss += lambda * balance * balance;
        let coef = 2.0 * lambda * balance / b;
        for (u, &z) in up_pos.iter_mut().zip(pos).chain(up_neg.iter_mut().zip(neg)) {
            let s = sigmoid(z);
            *u += coef * s * (1.0 - s);
        }
    }
    Ok((loss, up_pos, up_neg))
}

/// Standardized training rows.
struct Split {
    xs: Array2<f64>,
    thetas: Array2<f64>,
}

impl Split {
    fn new(data: &Dataset, st: &Standardization) -> Self {
        let mut xs = data.xs.clone();
        for mut row in xs.rows_mut() {
            let v = row.to_vec();
            st.write_x(&v, row.as_slice_mut().expect("standard layout"));
        }
        let mut thetas = data.thetas.clone();
        for mut row in thetas.rows_mut() {
            let v = row.to_vec();
            st.write_theta(&v, row.as_slice_mut().expect("standard layout"));
        }
        Self { xs, thetas }
    }

    fn len(&self) -> usize {
        self.xs.nrows()
    }
}

/// Fills `out` (2b rows) with the positive rows followed by the negative rows
/// of one batch. `primes` holds standardized θ' rows for DNRE.
fn fill_batch(out: &mut Array2<f64>, split: &Split, idx: &[usize], primes: Option<&Array2<f64>>) {
    let b = idx.len();
    let xd = split.xs.ncols();
    let td = split.thetas.ncols();
    for (m, &i) in idx.iter().enumerate() {
        let x = split.xs.row(i);
        let theta = split.thetas.row(i);
        let mut pos = out.row_mut(m);
        pos.slice_mut(s![..xd]).assign(&x);
        pos.slice_mut(s![xd..xd + td]).assign(&theta);
        match primes {
            Some(p) => {
                pos.slice_mut(s![xd + td..]).assign(&p.row(m));
                let mut neg = out.row_mut(b + m);
                neg.slice_mut(s![..xd]).assign(&x);
                neg.slice_mut(s![xd..xd + td]).assign(&p.row(m));
                neg.slice_mut(s![xd + td..]).assign(&theta);
            }
            None => {
                // roll the θ batch by one position
                let shifted = split.thetas.row(idx[(m + b - 1) % b]);
                let mut neg = out.row_mut(b + m);
                neg.slice_mut(s![..xd]).assign(&x);
                neg.slice_mut(s![xd..]).assign(&shifted);
            }
        }
    }
}

fn standardized_prior_draws(prior: &PriorSpec, st: &Standardization, n: usize, rng: &mut Rng) -> Array2<f64> {
    let mut out = Array2::zeros((n, prior.dim()));
    for mut row in out.rows_mut() {
        let draw = prior.sample(rng);
        st.write_theta(&draw, row.as_slice_mut().expect("standard layout"));
    }
    out
}

fn batch_ranges(n: usize, batch: usize) -> Vec<(usize, usize)> {
    (0..n)
        .step_by(batch)
        .map(|start| (start, (start + batch).min(n)))
        // a contrast pair needs two rows
        .filter(|(a, b)| b - a >= 2)
        .collect()
}

fn diverged(epoch: usize, batch: usize, logits: &[f64]) -> Error {
    let bad = logits.iter().filter(|v| !v.is_finite()).count();
    let max = logits
        .iter()
        .filter(|v| v.is_finite())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    Error::TrainingDiverged {
        epoch,
        batch,
        statistic: format!(
            "{bad} of {} logits non-finite, max |finite logit| = {max:e}",
            logits.len()
        ),
    }
}

/// Trains a ratio estimator on `dataset`. The leading rows form the training
/// split and the trailing `validation_fraction` the validation split; the
/// returned network is the one with the lowest validation loss.
pub fn train(
    dataset: &Dataset,
    prior: &PriorSpec,
    kind: EstimatorKind,
    cfg: &TrainConfig,
) -> Result<(RatioEstimator, LossCurve)> {
    cfg.validate()?;
    if prior.dim() != dataset.theta_dim() {
        return Err(Error::DimensionMismatch {
            context: "prior vs dataset θ",
            expected: dataset.theta_dim(),
            actual: prior.dim(),
        });
    }
    let n = dataset.len();
    let n_val = ((n as f64 * cfg.validation_fraction).round() as usize).max(2);
    let n_train = n.saturating_sub(n_val);
    if n_train < cfg.batch_size {
        return Err(Error::invalid(format!(
            "training split has {n_train} rows, fewer than the batch size {}",
            cfg.batch_size
        )));
    }
    let train_data = dataset.slice(0, n_train);
    let val_data = dataset.slice(n_train, n);
    let st = Standardization::fit(train_data.thetas.view(), train_data.xs.view());
    let train_split = Split::new(&train_data, &st);
    let val_split = Split::new(&val_data, &st);

    let root = Rng::new(cfg.seed);
    let mut init_rng = root.split(0);
    let mut order_rng = root.split(1);
    let mut contrast_rng = root.split(2);
    let mut val_rng = root.split(3);

    let in_dim = kind.input_dim(dataset.theta_dim(), dataset.x_dim());
    let mut sizes = vec![in_dim];
    sizes.extend(&cfg.hidden);
    sizes.push(1);
    let mut net = MlpNetwork::new(&sizes, cfg.activation, &mut init_rng)?;
    let mut adam = AdamState::new(
        &net,
        AdamConfig {
            learning_rate: cfg.learning_rate,
            ..AdamConfig::default()
        },
    );
    let pairwise = kind == EstimatorKind::Dnre;

    // Validation inputs are fixed once: the same contrasts every epoch.
    let val_batches = batch_ranges(val_split.len(), cfg.batch_size);
    let val_inputs: Vec<Array2<f64>> = val_batches
        .iter()
        .map(|&(a, b)| {
            let idx: Vec<usize> = (a..b).collect();
            let primes = pairwise.then(|| standardized_prior_draws(prior, &st, idx.len(), &mut val_rng));
            let mut m = Array2::zeros((2 * idx.len(), in_dim));
            fill_batch(&mut m, &val_split, &idx, primes.as_ref());
            m
        })
        .collect();

    let mut curve = LossCurve::default();
    let mut best: Option<(f64, usize, MlpNetwork)> = None;
    let mut order: Vec<usize> = (0..n_train).collect();
    let ranges = batch_ranges(n_train, cfg.batch_size);
    let mut buffer = Array2::zeros((2 * cfg.batch_size, in_dim));

    for epoch in 1..=cfg.epochs {
        order_rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for (batch_no, &(a, b)) in ranges.iter().enumerate() {
            let idx = &order[a..b];
            let rows = 2 * idx.len();
            if buffer.nrows() != rows {
                buffer = Array2::zeros((rows, in_dim));
            }
            let primes = pairwise.then(|| standardized_prior_draws(prior, &st, idx.len(), &mut contrast_rng));
            fill_batch(&mut buffer, &train_split, idx, primes.as_ref());
            let cache = net.forward_cached(buffer.view())?;
            let logits = cache.logits().to_vec();
            if logits.iter().any(|v| !v.is_finite()) {
                return Err(diverged(epoch, batch_no, &logits));
            }
            let (loss, up_pos, up_neg) = contrastive_loss(kind, &logits[..idx.len()], &logits[idx.len()..])?;
            if !loss.is_finite() {
                return Err(diverged(epoch, batch_no, &logits));
            }
            let upstream: Array1<f64> = up_pos.into_iter().chain(up_neg).collect();
            let (grads, _) = net.backward_batch(&cache, upstream.view(), false)?;
            adam_step(&mut net, &grads, &mut adam)?;
            epoch_loss += loss;
        }
        curve.train.push(epoch_loss / ranges.len() as f64);

        let mut val_loss = 0.0;
        for inputs in &val_inputs {
            let logits = net.forward_batch(inputs.view()).map_err(|_| Error::TrainingDiverged {
                epoch,
                batch: 0,
                statistic: "non-finite validation logit".into(),
            })?;
            let half = logits.len() / 2;
            let logits = logits.to_vec();
            val_loss += contrastive_loss(kind, &logits[..half], &logits[half..])?.0;
        }
        val_loss /= val_inputs.len() as f64;
        curve.val.push(val_loss);
        if best.as_ref().is_none_or(|(v, _, _)| val_loss < *v) {
            best = Some((val_loss, epoch, net.clone()));
        }
        log::debug!("epoch {epoch}: train {:.5} val {val_loss:.5}", curve.train[epoch - 1]);
    }

    let (best_val_loss, best_epoch, best_net) = best.expect("at least one epoch");
    let training = TrainingMeta {
        seed: cfg.seed,
        epochs: cfg.epochs,
        best_epoch,
        best_val_loss,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        n_train,
        n_val: val_split.len(),
    };
    let est = RatioEstimator::new(kind, dataset.task.clone(), best_net, st, training)?;
    Ok((est, curve))
}
