//! Classifier two-sample test: cross-validated accuracy of an MLP trained to
//! tell two sample sets apart. 0.5 means indistinguishable.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::numcore::math::{sigmoid, softplus};
use crate::numcore::{adam_step, Activation, AdamConfig, AdamState, MlpNetwork, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct C2stConfig {
    pub folds: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Stop once the training loss failed to improve by `tolerance` for
    /// `patience` consecutive epochs.
    pub tolerance: f64,
    pub patience: usize,
    /// Hidden width as a multiple of the input dimension.
    pub width_factor: usize,
}

impl Default for C2stConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            max_epochs: 200,
            batch_size: 200,
            learning_rate: 1e-3,
            tolerance: 1e-4,
            patience: 10,
            width_factor: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct C2stResult {
    pub accuracy: f64,
    pub fold_accuracies: Vec<f64>,
    /// Indices of zero-variance features that were removed.
    pub dropped_features: Vec<usize>,
}

pub const MIN_C2ST_SAMPLES: usize = 100;

pub fn c2st<'a>(a: ArrayView2<'a, f64>, b: ArrayView2<'a, f64>, seed: u64) -> Result<C2stResult> {
    c2st_with(a, b, seed, &C2stConfig::default())
}

/// Labels `a = 0`, `b = 1`; pooled z-scoring; stratified k-fold mean
/// accuracy of a two-hidden-layer ReLU network.
pub fn c2st_with<'a>(
    a: ArrayView2<'a, f64>,
    b: ArrayView2<'a, f64>,
    seed: u64,
    cfg: &C2stConfig,
) -> Result<C2stResult> {
    check_dim("c2st sample counts", a.nrows(), b.nrows())?;
    check_dim("c2st dimensions", a.ncols(), b.ncols())?;
    if a.nrows() < MIN_C2ST_SAMPLES {
        return Err(Error::invalid(format!(
            "C2ST needs at least {MIN_C2ST_SAMPLES} samples per set"
        )));
    }
    if cfg.folds < 2 || a.nrows() < cfg.folds {
        return Err(Error::invalid("C2ST needs at least 2 folds and one sample per fold"));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("C2ST samples"));
    }
    let n = a.nrows();
    let pooled = ndarray::concatenate(Axis(0), &[a, b]).expect("matching widths");

    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut mean = Vec::new();
    let mut std = Vec::new();
    for (k, col) in pooled.axis_iter(Axis(1)).enumerate() {
        let m = col.mean().unwrap_or(0.0);
        let s = col.std(0.0);
        if s > 1e-12 * (1.0 + m.abs()) {
            kept.push(k);
            mean.push(m);
            std.push(s);
        } else {
            dropped.push(k);
        }
    }
    if kept.is_empty() {
        // nothing distinguishes the sets
        return Ok(C2stResult {
            accuracy: 0.5,
            fold_accuracies: vec![0.5; cfg.folds],
            dropped_features: dropped,
        });
    }
    let d = kept.len();
    let mut data = Array2::zeros((2 * n, d));
    for (mut row, src) in data.rows_mut().into_iter().zip(pooled.rows()) {
        for (j, &k) in kept.iter().enumerate() {
            row[j] = (src[k] - mean[j]) / std[j];
        }
    }
    let labels: Vec<f64> = (0..2 * n).map(|i| if i < n { 0.0 } else { 1.0 }).collect();

    // stratified folds: each class is shuffled and dealt round-robin
    let root = Rng::new(seed);
    let mut fold_of = vec![0usize; 2 * n];
    let mut shuffle_rng = root.split(0);
    for class in 0..2 {
        let mut idx: Vec<usize> = (class * n..(class + 1) * n).collect();
        shuffle_rng.shuffle(&mut idx);
        for (pos, i) in idx.into_iter().enumerate() {
            fold_of[i] = pos % cfg.folds;
        }
    }

    let fold_accuracies: Vec<f64> = (0..cfg.folds)
        .into_par_iter()
        .map(|fold| {
            let train: Vec<usize> = (0..2 * n).filter(|&i| fold_of[i] != fold).collect();
            let test: Vec<usize> = (0..2 * n).filter(|&i| fold_of[i] == fold).collect();
            let mut rng = root.split(1 + fold as u64);
            let net = fit(&data, &labels, &train, d, cfg, &mut rng)?;
            let x = data.select(Axis(0), &test);
            let logits = net.forward_batch(x.view())?;
            let correct = logits
                .iter()
                .zip(&test)
                .filter(|(z, &i)| (**z > 0.0) == (labels[i] > 0.5))
                .count();
            Ok(correct as f64 / test.len() as f64)
        })
        .collect::<Result<_>>()?;
    let accuracy = fold_accuracies.iter().sum::<f64>() / cfg.folds as f64;
    Ok(C2stResult {
        accuracy,
        fold_accuracies,
        dropped_features: dropped,
    })
}

fn fit(
    data: &Array2<f64>,
    labels: &[f64],
    train: &[usize],
    d: usize,
    cfg: &C2stConfig,
    rng: &mut Rng,
) -> Result<MlpNetwork> {
    let width = cfg.width_factor * d;
    let mut net = MlpNetwork::new(&[d, width, width, 1], Activation::Relu, rng)?;
    let mut adam = AdamState::new(
        &net,
        AdamConfig {
            learning_rate: cfg.learning_rate,
            ..AdamConfig::default()
        },
    );
    let mut order = train.to_vec();
    let mut best = f64::INFINITY;
    let mut stale = 0;
    for _ in 0..cfg.max_epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let x = data.select(Axis(0), chunk);
            let cache = net.forward_cached(x.view())?;
            let m = chunk.len() as f64;
            let mut upstream = Array1::zeros(chunk.len());
            for (k, (&z, &i)) in cache.logits().iter().zip(chunk).enumerate() {
                let y = labels[i];
                epoch_loss += softplus(z) - y * z;
                upstream[k] = (sigmoid(z) - y) / m;
            }
            let (grads, _) = net.backward_batch(&cache, upstream.view(), false)?;
            adam_step(&mut net, &grads, &mut adam)?;
        }
        epoch_loss /= order.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::NonFinite("C2ST classifier loss"));
        }
        if epoch_loss < best - cfg.tolerance {
            best = epoch_loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok(net)
}
