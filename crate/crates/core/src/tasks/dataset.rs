//! Simulated training sets and their CSV + JSON-sidecar file format.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{s, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{TaskId, TaskSpec};
use crate::error::{Error, Result};
use crate::numcore::Rng;

pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub task: TaskId,
    pub seed: u64,
    pub thetas: Array2<f64>,
    pub xs: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format_version: u32,
    pub task: TaskId,
    pub n: usize,
    pub seed: u64,
    pub theta_dim: usize,
    pub x_dim: usize,
}

/// `n` prior draws with one simulation each. Row `i` uses the stream
/// `Rng::new(seed).split(i)`, so sharding rows across workers is exact.
pub fn generate_dataset(task: &TaskSpec, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("dataset size must be at least 1"));
    }
    let root = Rng::new(seed);
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = root.split(i as u64);
            let theta = task.prior.sample(&mut rng);
            let x = task.simulate(&theta, &mut rng)?;
            Ok((theta, x))
        })
        .collect::<Result<_>>()?;
    let mut thetas = Array2::zeros((n, task.theta_dim));
    let mut xs = Array2::zeros((n, task.x_dim));
    for (i, (t, x)) in rows.into_iter().enumerate() {
        thetas.row_mut(i).assign(&ndarray::ArrayView1::from(&t));
        xs.row_mut(i).assign(&ndarray::ArrayView1::from(&x));
    }
    Ok(Dataset {
        task: task.id.clone(),
        seed,
        thetas,
        xs,
    })
}

fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.thetas.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn theta_dim(&self) -> usize {
        self.thetas.ncols()
    }

    pub fn x_dim(&self) -> usize {
        self.xs.ncols()
    }

    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            format_version: DATASET_FORMAT_VERSION,
            task: self.task.clone(),
            n: self.len(),
            seed: self.seed,
            theta_dim: self.theta_dim(),
            x_dim: self.x_dim(),
        }
    }

    /// Contiguous row range as a new dataset.
    pub fn slice(&self, start: usize, end: usize) -> Dataset {
        Dataset {
            task: self.task.clone(),
            seed: self.seed,
            thetas: self.thetas.slice(s![start..end, ..]).to_owned(),
            xs: self.xs.slice(s![start..end, ..]).to_owned(),
        }
    }

    pub fn header(&self) -> Vec<String> {
        (0..self.theta_dim())
            .map(|i| format!("theta_{i}"))
            .chain((0..self.x_dim()).map(|i| format!("x_{i}")))
            .collect()
    }

    /// Writes `path` (CSV) and the sidecar `path.with_extension("json")`.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(&self.header().join(","));
        out.push('\n');
        for (t, x) in self.thetas.rows().into_iter().zip(self.xs.rows()) {
            let line: Vec<String> = t.iter().chain(x.iter()).map(|v| format!("{v:?}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        fs::write(path, out)?;
        let mut f = fs::File::create(sidecar_path(path))?;
        serde_json::to_writer_pretty(&mut f, &self.meta())?;
        f.write_all(b"\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Dataset> {
        let meta: DatasetMeta = serde_json::from_slice(&fs::read(sidecar_path(path))?)?;
        if meta.format_version != DATASET_FORMAT_VERSION {
            return Err(Error::Data(format!(
                "dataset format version {} is not supported",
                meta.format_version
            )));
        }
        let mut reader = csv::Reader::from_path(path)?;
        let width = meta.theta_dim + meta.x_dim;
        if reader.headers()?.len() != width {
            return Err(Error::Data(format!("expected {width} columns in {path:?}")));
        }
        let mut values = Vec::with_capacity(meta.n * width);
        for record in reader.records() {
            let record = record?;
            for field in record.iter() {
                values.push(
                    field
                        .trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Data(format!("bad number `{field}`: {e}")))?,
                );
            }
        }
        if values.len() != meta.n * width {
            return Err(Error::Data(format!(
                "{path:?} holds {} values, metadata announces {} rows",
                values.len(),
                meta.n
            )));
        }
        let all = Array2::from_shape_vec((meta.n, width), values).map_err(|e| Error::Data(e.to_string()))?;
        Ok(Dataset {
            task: meta.task,
            seed: meta.seed,
            thetas: all.slice(s![.., ..meta.theta_dim]).to_owned(),
            xs: all.slice(s![.., meta.theta_dim..]).to_owned(),
        })
    }
}
