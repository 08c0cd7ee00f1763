//! Declarative run configuration. A TOML file provides the base values,
//! command-line flags override them, and the merged result is written next
//! to the outputs so the run can be replayed with `--config`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use nre_core::diagnostics::{C2stConfig, RatioMseProtocol};
use nre_core::estimators::{EstimatorKind, TrainConfig};
use nre_core::posterior::DEFAULT_MC_SAMPLES;
use nre_core::samplers::{HmcConfig, MhConfig};
use nre_core::tasks::TaskId;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every component seed is set from it.
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub task: Option<TaskId>,
    pub inputs: Inputs,
    pub simulate: SimulateSection,
    pub estimator: EstimatorSection,
    pub train: TrainConfig,
    pub sampler: SamplerSection,
    pub posterior: PosteriorSection,
    pub diagnostics: DiagnosticsSection,
    pub rank: RankSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    /// Training dataset CSV (with its JSON sidecar).
    pub data: Option<PathBuf>,
    pub checkpoints: Vec<PathBuf>,
    /// Use the task's exact likelihood ratio instead of a checkpoint.
    pub oracle: bool,
    pub x_obs: Option<Vec<f64>>,
    /// Candidate parameters for ranking, one row per candidate.
    pub candidates: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub n: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { n: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSection {
    /// `nre`, `bnre`, or `dnre`.
    pub kind: String,
    /// Balancing weight for `bnre`.
    pub lambda: Option<f64>,
    /// Average f(θ, θ') and -f(θ', θ) for pairwise models.
    pub antisymmetric: bool,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        Self {
            kind: "dnre".into(),
            lambda: None,
            antisymmetric: false,
        }
    }
}

impl EstimatorSection {
    pub fn resolve(&self) -> Result<EstimatorKind, CliError> {
        Ok(EstimatorKind::parse(&self.kind, self.lambda)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Mh,
    Hmc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    pub kind: SamplerKind,
    pub mh: MhConfig,
    pub hmc: HmcConfig,
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self {
            kind: SamplerKind::Mh,
            mh: MhConfig::default(),
            hmc: HmcConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PosteriorSection {
    /// Size of the shared θ' bank for pairwise models.
    pub mc_samples: usize,
    /// Defaults to the master seed.
    pub bank_seed: Option<u64>,
    pub resolution: usize,
    /// Grid bounds; default to the prior's plotting box.
    pub low: Option<Vec<f64>>,
    pub high: Option<Vec<f64>>,
}

impl Default for PosteriorSection {
    fn default() -> Self {
        Self {
            mc_samples: DEFAULT_MC_SAMPLES,
            bank_seed: None,
            resolution: 100,
            low: None,
            high: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    RatioMse,
    C2st,
    Coverage,
    Truth,
}

impl Metric {
    pub fn parse(name: &str) -> Result<Self, CliError> {
        match name {
            "ratio-mse" => Ok(Metric::RatioMse),
            "c2st" => Ok(Metric::C2st),
            "coverage" => Ok(Metric::Coverage),
            "truth" => Ok(Metric::Truth),
            other => Err(CliError::Usage(format!(
                "unknown metric `{other}` (expected ratio-mse, c2st, coverage, truth)"
            ))),
        }
    }

    pub fn key(&self) -> &'static str {
        match self {
            Metric::RatioMse => "ratio_mse",
            Metric::C2st => "c2st",
            Metric::Coverage => "coverage",
            Metric::Truth => "log_posterior_at_truth",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSection {
    pub metrics: Vec<Metric>,
    /// `(θ*, x)` pairs for coverage and log posterior at truth.
    pub n_pairs: usize,
    /// Posterior samples per pair for coverage.
    pub n_samples: usize,
    /// Samples per set for C2ST.
    pub c2st_samples: usize,
    pub ratio_mse: RatioMseProtocol,
    pub c2st: C2stConfig,
    /// Chains used to draw coverage samples; `n_steps` follows `n_samples`.
    pub coverage_chains: MhConfig,
    /// Warm-start run on the single-pass ratio before the coverage chains;
    /// skipped when its `burn_in` is 0.
    pub coverage_pilot: MhConfig,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self {
            metrics: vec![Metric::RatioMse],
            n_pairs: 100,
            n_samples: 100,
            c2st_samples: 1000,
            ratio_mse: RatioMseProtocol::default(),
            c2st: C2stConfig::default(),
            coverage_chains: MhConfig {
                n_chains: 4,
                burn_in: 50,
                thin: 4,
                proposal_std: 0.05,
                ..MhConfig::default()
            },
            coverage_pilot: MhConfig {
                n_chains: 4,
                n_steps: 1,
                burn_in: 300,
                thin: 1,
                proposal_std: 0.05,
                seed: 0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankSection {
    pub k: usize,
}

impl Default for RankSection {
    fn default() -> Self {
        Self { k: 10 }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    /// Copies the master seed into every component that carries its own.
    pub fn propagate_seed(&mut self) {
        self.train.seed = self.seed;
        self.sampler.mh.seed = self.seed;
        self.sampler.hmc.seed = self.seed;
        self.diagnostics.ratio_mse.seed = self.seed;
        self.diagnostics.coverage_chains.seed = self.seed;
        self.diagnostics.coverage_pilot.seed = self.seed;
    }

    pub fn bank_seed(&self) -> u64 {
        self.posterior.bank_seed.unwrap_or(self.seed)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Usage(format!("cannot serialize config: {e}")))
    }

    /// SHA-256 of the resolved TOML text.
    pub fn digest(&self) -> Result<String, CliError> {
        let text = self.to_toml()?;
        Ok(Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_roundtrips_through_toml() {
        let mut cfg = RunConfig {
            task: Some(TaskId::Gauss1d { sigma: 0.5 }),
            ..RunConfig::default()
        };
        cfg.estimator.kind = "bnre".into();
        cfg.estimator.lambda = Some(3.0);
        cfg.inputs.x_obs = Some(vec![1.0]);
        let text = cfg.to_toml().unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg: RunConfig =
            toml::from_str("seed = 4\n[task]\nname = \"two_moons\"\n[train]\nepochs = 5\n[sampler]\nkind = \"hmc\"\n")
                .unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.task, Some(TaskId::TwoMoons));
        assert_eq!(cfg.train.epochs, 5);
        assert_eq!(cfg.train.batch_size, TrainConfig::default().batch_size);
        assert_eq!(cfg.sampler.kind, SamplerKind::Hmc);
        assert_eq!(cfg.estimator.resolve().unwrap(), EstimatorKind::Dnre);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("sed = 1\n").is_err());
        assert!(toml::from_str::<RunConfig>("[train]\nepoch = 1\n").is_err());
    }

    #[test]
    fn digest_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.digest().unwrap(), b.digest().unwrap());
        b.seed = 1;
        assert_ne!(a.digest().unwrap(), b.digest().unwrap());
    }
}
