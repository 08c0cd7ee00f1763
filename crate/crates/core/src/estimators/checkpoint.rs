//! JSON checkpoints. Floats are written with shortest round-trip formatting
//! so that loading restores every parameter bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::model::{RatioEstimator, Standardization, TrainingMeta};
use super::EstimatorKind;
use crate::error::{Error, Result};
use crate::numcore::{Activation, Dense, MlpNetwork};
use crate::tasks::TaskId;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format_version: u32,
    estimator: EstimatorKind,
    task: TaskId,
    layer_sizes: Vec<usize>,
    activation: Activation,
    /// Per layer, `out_dim` rows of `in_dim` weights.
    weights: Vec<Vec<Vec<f64>>>,
    biases: Vec<Vec<f64>>,
    standardization: Standardization,
    antisymmetric: bool,
    training: TrainingMeta,
}

fn to_file(est: &RatioEstimator) -> CheckpointFile {
    CheckpointFile {
        format_version: CHECKPOINT_FORMAT_VERSION,
        estimator: est.kind,
        task: est.task.clone(),
        layer_sizes: est.net.layer_sizes(),
        activation: est.net.activation(),
        weights: est
            .net
            .layers()
            .iter()
            .map(|l| l.weight.rows().into_iter().map(|r| r.to_vec()).collect())
            .collect(),
        biases: est.net.layers().iter().map(|l| l.bias.to_vec()).collect(),
        standardization: est.standardization.clone(),
        antisymmetric: est.antisymmetric,
        training: est.training.clone(),
    }
}

fn from_file(file: CheckpointFile) -> std::result::Result<RatioEstimator, String> {
    if file.weights.len() != file.biases.len() || file.layer_sizes.len() != file.weights.len() + 1 {
        return Err("layer count does not match layer_sizes".into());
    }
    let mut layers = Vec::with_capacity(file.weights.len());
    for (i, (w, b)) in file.weights.into_iter().zip(file.biases).enumerate() {
        let (rows, cols) = (file.layer_sizes[i + 1], file.layer_sizes[i]);
        if w.len() != rows || w.iter().any(|r| r.len() != cols) || b.len() != rows {
            return Err(format!("layer {i} does not have shape {rows}x{cols}"));
        }
        let weight =
            Array2::from_shape_vec((rows, cols), w.into_iter().flatten().collect()).map_err(|e| e.to_string())?;
        layers.push(Dense {
            weight,
            bias: Array1::from(b),
        });
    }
    let net = MlpNetwork::from_layers(layers, file.activation).map_err(|e| e.to_string())?;
    let mut est = RatioEstimator::new(file.estimator, file.task, net, file.standardization, file.training)
        .map_err(|e| e.to_string())?;
    est.antisymmetric = file.antisymmetric;
    Ok(est)
}

pub fn to_json(est: &RatioEstimator) -> Result<String> {
    let mut text = serde_json::to_string_pretty(&to_file(est))?;
    text.push('\n');
    Ok(text)
}

pub fn save(est: &RatioEstimator, path: &Path) -> Result<()> {
    fs::write(path, to_json(est)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<RatioEstimator> {
    let bytes = fs::read(path)?;
    let corrupt = |reason: String| Error::CorruptCheckpoint {
        path: path.to_path_buf(),
        reason,
    };
    let value: serde_json::Value = serde_json::from_slice(&bytes).map_err(|e| corrupt(e.to_string()))?;
    let version = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| corrupt("missing format_version".into()))?;
    if version != CHECKPOINT_FORMAT_VERSION as u64 {
        return Err(Error::VersionMismatch {
            found: version as u32,
            expected: CHECKPOINT_FORMAT_VERSION,
        });
    }
    let file: CheckpointFile = serde_json::from_value(value).map_err(|e| corrupt(e.to_string()))?;
    from_file(file).map_err(corrupt)
}

/// Hex SHA-256 of a file, used to tie reports to the exact checkpoint.
pub fn checkpoint_digest(path: &Path) -> Result<String> {
    let digest = Sha256::digest(fs::read(path)?);
    let mut out = String::with_capacity(64);
    for byte in digest {
        let _ = write!(out, "{byte:02x}");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;

    fn estimator(kind: EstimatorKind) -> RatioEstimator {
        let net = MlpNetwork::new(&[kind.input_dim(2, 2), 5, 3, 1], Activation::Elu, &mut Rng::new(4)).unwrap();
        let st = Standardization {
            x_mean: vec![0.1, 1.0 / 3.0],
            x_std: vec![0.7, 1e-3],
            theta_mean: vec![-0.2, 0.0],
            theta_std: vec![0.57735, 2.0],
        };
        let meta = TrainingMeta {
            seed: 9,
            epochs: 3,
            best_epoch: 2,
            best_val_loss: 1.2345678901234567,
            batch_size: 64,
            learning_rate: 1e-3,
            n_train: 100,
            n_val: 50,
        };
        RatioEstimator::new(kind, TaskId::TwoMoons, net, st, meta).unwrap()
    }

    #[test]
    fn roundtrip_is_exact_and_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        for kind in [
            EstimatorKind::Nre,
            EstimatorKind::Bnre { lambda: 100.0 },
            EstimatorKind::Dnre,
        ] {
            let est = estimator(kind);
            let p1 = dir.path().join("a.json");
            let p2 = dir.path().join("b.json");
            save(&est, &p1).unwrap();
            let back = load(&p1).unwrap();
            assert_eq!(back, est);
            save(&back, &p2).unwrap();
            assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
            assert_eq!(checkpoint_digest(&p1).unwrap(), checkpoint_digest(&p2).unwrap());
        }
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        save(&estimator(EstimatorKind::Dnre), &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load(&path), Err(Error::CorruptCheckpoint { .. })));
    }

    #[test]
    fn version_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        let text = to_json(&estimator(EstimatorKind::Nre)).unwrap();
        fs::write(
            &path,
            text.replacen("\"format_version\": 1", "\"format_version\": 99", 1),
        )
        .unwrap();
        assert!(matches!(
            load(&path),
            Err(Error::VersionMismatch { found: 99, expected: 1 })
        ));
    }

    #[test]
    fn inconsistent_shapes_are_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        let mut file = to_file(&estimator(EstimatorKind::Nre));
        file.weights[1].pop();
        fs::write(&path, serde_json::to_string(&file).unwrap()).unwrap();
        assert!(matches!(load(&path), Err(Error::CorruptCheckpoint { .. })));
    }
}
