use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{concatenate, Array2, Axis};
use serde::Serialize;

use crate::error::{Error, Result};

/// Output of a sampler run: post burn-in, thinned draws for every chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSet {
    pub sampler: &'static str,
    pub draws: Vec<Array2<f64>>,
    /// Fraction of accepted proposals after burn-in, per chain.
    pub acceptance: Vec<f64>,
    /// Fraction of accepted proposals during burn-in, per chain.
    pub burn_in_acceptance: Vec<f64>,
    /// Non-finite trajectories per chain (HMC).
    pub divergences: Vec<usize>,
    /// Step size after each burn-in step (HMC dual averaging).
    pub step_size_trace: Vec<f64>,
    pub final_step_size: Option<f64>,
    pub seeds: Vec<u64>,
    pub warnings: Vec<String>,
    pub config: serde_json::Value,
}

#[derive(Serialize)]
struct Manifest<'a> {
    sampler: &'a str,
    config: &'a serde_json::Value,
    seeds: &'a [u64],
    acceptance: &'a [f64],
    burn_in_acceptance: &'a [f64],
    divergences: &'a [usize],
    final_step_size: Option<f64>,
    warnings: &'a [String],
    chain_files: Vec<String>,
}

impl ChainSet {
    pub fn n_chains(&self) -> usize {
        self.draws.len()
    }

    pub fn dim(&self) -> usize {
        self.draws.first().map_or(0, |d| d.ncols())
    }

    /// All chains stacked in chain order.
    pub fn pooled(&self) -> Array2<f64> {
        let views: Vec<_> = self.draws.iter().map(|d| d.view()).collect();
        concatenate(Axis(0), &views).unwrap_or_else(|_| Array2::zeros((0, self.dim())))
    }

    pub fn mean_acceptance(&self) -> f64 {
        self.acceptance.iter().sum::<f64>() / self.acceptance.len().max(1) as f64
    }

    pub fn total_divergences(&self) -> usize {
        self.divergences.iter().sum()
    }

    pub fn chain_csv(&self, chain: usize) -> String {
        let draws = &self.draws[chain];
        let header: Vec<String> = (0..draws.ncols()).map(|k| format!("theta_{k}")).collect();
        let mut out = format!("step,{}\n", header.join(","));
        for (step, row) in draws.rows().into_iter().enumerate() {
            let values: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(out, "{step},{}", values.join(","));
        }
        out
    }

    /// Writes `chain_<k>.csv` for every chain and `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let mut names = Vec::new();
        for k in 0..self.n_chains() {
            let name = format!("chain_{k}.csv");
            let path = dir.join(&name);
            fs::write(&path, self.chain_csv(k))?;
            written.push(path);
            names.push(name);
        }
        let manifest = Manifest {
            sampler: self.sampler,
            config: &self.config,
            seeds: &self.seeds,
            acceptance: &self.acceptance,
            burn_in_acceptance: &self.burn_in_acceptance,
            divergences: &self.divergences,
            final_step_size: self.final_step_size,
            warnings: &self.warnings,
            chain_files: names,
        };
        let path = dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(&path, text)?;
        written.push(path);
        Ok(written)
    }
}

pub(super) fn zero_acceptance_warning(chain: usize, burn_in: usize) -> String {
    let msg = format!("chain {chain} accepted no proposal during {burn_in} burn-in steps");
    log::warn!("{msg}");
    msg
}

pub(super) fn require_positive(name: &str, value: usize) -> Result<()> {
    if value == 0 {
        return Err(Error::invalid(format!("{name} must be at least 1")));
    }
    Ok(())
}
