use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use nre_core::tasks::TaskId;

use crate::config::{Metric, RunConfig, SamplerKind};
use crate::run::parse_x_obs;
use crate::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "nre",
    version,
    about = "Neural likelihood-ratio estimation for simulation-based inference"
)]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for this run (default: <output-root>/<command>).
    #[arg(long, short = 'o', global = true)]
    pub out: Option<PathBuf>,
    /// Root under which default output directories are created.
    #[arg(long, global = true, env = "NRE_OUTPUT_ROOT", default_value = "runs")]
    pub output_root: PathBuf,
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw (θ, x) pairs from the prior and simulator.
    Simulate(SimulateArgs),
    /// Train a ratio estimator and write its checkpoint and loss curve.
    Train(TrainArgs),
    /// Run MCMC on the posterior given an observation.
    Sample(SampleArgs),
    /// Evaluate the log posterior on a 1-D or 2-D grid.
    Posterior(PosteriorArgs),
    /// Compute diagnostics and write a JSON report.
    Diagnose(DiagnoseArgs),
    /// Rank candidate parameters by posterior score.
    Rank(RankArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Train(_) => "train",
            Command::Sample(_) => "sample",
            Command::Posterior(_) => "posterior",
            Command::Diagnose(_) => "diagnose",
            Command::Rank(_) => "rank",
        }
    }

    pub fn apply(&self, cfg: &mut RunConfig) -> Result<(), CliError> {
        match self {
            Command::Simulate(a) => {
                a.task.apply(cfg)?;
                set(&mut cfg.simulate.n, a.n);
            }
            Command::Train(a) => {
                a.task.apply(cfg)?;
                if a.data.is_some() {
                    cfg.inputs.data = a.data.clone();
                }
                set(&mut cfg.simulate.n, a.n_sim);
                if let Some(kind) = &a.estimator {
                    cfg.estimator.kind = kind.clone();
                }
                if a.lambda.is_some() {
                    cfg.estimator.lambda = a.lambda;
                }
                if a.antisymmetric {
                    cfg.estimator.antisymmetric = true;
                }
                set(&mut cfg.train.epochs, a.epochs);
                set(&mut cfg.train.batch_size, a.batch_size);
                set(&mut cfg.train.learning_rate, a.learning_rate);
                set(&mut cfg.train.validation_fraction, a.validation_fraction);
                if let Some(h) = &a.hidden {
                    cfg.train.hidden = h.clone();
                }
            }
            Command::Sample(a) => {
                a.model.apply(cfg)?;
                a.sampler.apply(cfg);
            }
            Command::Posterior(a) => {
                a.model.apply(cfg)?;
                a.bank.apply(cfg);
                set(&mut cfg.posterior.resolution, a.resolution);
                if a.low.is_some() {
                    cfg.posterior.low = a.low.clone();
                }
                if a.high.is_some() {
                    cfg.posterior.high = a.high.clone();
                }
            }
            Command::Diagnose(a) => {
                a.model.apply(cfg)?;
                a.sampler.apply(cfg);
                a.bank.apply(cfg);
                if a.data.is_some() {
                    cfg.inputs.data = a.data.clone();
                }
                if !a.metric.is_empty() {
                    cfg.diagnostics.metrics = a.metric.iter().map(|m| Metric::parse(m)).collect::<Result<_, _>>()?;
                }
                set(&mut cfg.diagnostics.n_pairs, a.n_pairs);
                set(&mut cfg.diagnostics.n_samples, a.n_samples);
                set(&mut cfg.diagnostics.c2st_samples, a.c2st_samples);
            }
            Command::Rank(a) => {
                a.model.apply(cfg)?;
                a.bank.apply(cfg);
                if a.candidates.is_some() {
                    cfg.inputs.candidates = a.candidates.clone();
                }
                set(&mut cfg.rank.k, a.k);
            }
        }
        Ok(())
    }
}

fn set<T: Copy>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Debug, Args)]
pub struct TaskArgs {
    /// gauss1d, two_moons, gaussian_linear, gaussian_linear_uniform, gaussian_mixture.
    #[arg(long)]
    pub task: Option<String>,
    /// Noise scale of gauss1d.
    #[arg(long)]
    pub sigma: Option<f64>,
}

impl TaskArgs {
    fn apply(&self, cfg: &mut RunConfig) -> Result<(), CliError> {
        match (&self.task, self.sigma) {
            (Some(name), sigma) => cfg.task = Some(TaskId::parse(name, sigma)?),
            (None, Some(sigma)) => match &cfg.task {
                Some(TaskId::Gauss1d { .. }) | None => cfg.task = Some(TaskId::parse("gauss1d", Some(sigma))?),
                Some(_) => return Err(CliError::Usage("--sigma only applies to gauss1d".into())),
            },
            (None, None) => {}
        }
        Ok(())
    }
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[command(flatten)]
    pub task: TaskArgs,
    /// Estimator checkpoint; repeat for several.
    #[arg(long = "checkpoint")]
    pub checkpoints: Vec<PathBuf>,
    /// Use the task's exact likelihood ratio.
    #[arg(long)]
    pub oracle: bool,
    /// Observation: comma-separated values or a one-row CSV file.
    #[arg(long = "x-obs", alias = "x-target", allow_hyphen_values = true)]
    pub x_obs: Option<String>,
}

impl ModelArgs {
    fn apply(&self, cfg: &mut RunConfig) -> Result<(), CliError> {
        self.task.apply(cfg)?;
        if !self.checkpoints.is_empty() {
            cfg.inputs.checkpoints = self.checkpoints.clone();
        }
        if self.oracle {
            cfg.inputs.oracle = true;
        }
        if let Some(x) = &self.x_obs {
            cfg.inputs.x_obs = Some(parse_x_obs(x)?);
        }
        Ok(())
    }
}

#[derive(Debug, Args)]
pub struct SamplerArgs {
    /// mh or hmc.
    #[arg(long, value_parser = parse_sampler)]
    pub sampler: Option<SamplerKind>,
    #[arg(long)]
    pub n_chains: Option<usize>,
    /// Post burn-in iterations per chain.
    #[arg(long, alias = "n-draws")]
    pub n_steps: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    /// MH proposal standard deviation.
    #[arg(long)]
    pub proposal_std: Option<f64>,
    /// HMC leapfrog steps per trajectory.
    #[arg(long)]
    pub n_leapfrog: Option<usize>,
    /// HMC initial step size.
    #[arg(long)]
    pub step_size: Option<f64>,
    /// HMC per-trajectory step-size jitter fraction (0 disables).
    #[arg(long)]
    pub step_jitter: Option<f64>,
    /// HMC dual-averaging target acceptance.
    #[arg(long)]
    pub target_accept: Option<f64>,
}

fn parse_sampler(s: &str) -> Result<SamplerKind, String> {
    match s {
        "mh" => Ok(SamplerKind::Mh),
        "hmc" => Ok(SamplerKind::Hmc),
        other => Err(format!("unknown sampler `{other}` (expected mh or hmc)")),
    }
}

impl SamplerArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let s = &mut cfg.sampler;
        set(&mut s.kind, self.sampler);
        set(&mut s.mh.n_chains, self.n_chains);
        set(&mut s.hmc.n_chains, self.n_chains);
        set(&mut s.mh.n_steps, self.n_steps);
        set(&mut s.hmc.n_draws, self.n_steps);
        set(&mut s.mh.burn_in, self.burn_in);
        set(&mut s.hmc.burn_in, self.burn_in);
        set(&mut s.mh.thin, self.thin);
        set(&mut s.hmc.thin, self.thin);
        set(&mut s.mh.proposal_std, self.proposal_std);
        set(&mut s.hmc.n_leapfrog, self.n_leapfrog);
        set(&mut s.hmc.step_size, self.step_size);
        set(&mut s.hmc.step_jitter, self.step_jitter);
        set(&mut s.hmc.target_accept, self.target_accept);
    }
}

#[derive(Debug, Args)]
pub struct BankArgs {
    /// Size of the shared θ' bank for pairwise models.
    #[arg(long)]
    pub mc_samples: Option<usize>,
    #[arg(long)]
    pub bank_seed: Option<u64>,
}

impl BankArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.posterior.mc_samples, self.mc_samples);
        if self.bank_seed.is_some() {
            cfg.posterior.bank_seed = self.bank_seed;
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub task: TaskArgs,
    /// Number of simulations.
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub task: TaskArgs,
    /// Dataset CSV written by `simulate`; simulated in-process when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Simulations to draw when no dataset is given.
    #[arg(long)]
    pub n_sim: Option<usize>,
    /// nre, bnre, or dnre.
    #[arg(long)]
    pub estimator: Option<String>,
    /// BNRE balancing weight.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub antisymmetric: bool,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub validation_fraction: Option<f64>,
    /// Hidden layer widths, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub sampler: SamplerArgs,
}

#[derive(Debug, Args)]
pub struct PosteriorArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub bank: BankArgs,
    /// Grid points per axis.
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub low: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub high: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[command(flatten)]
    pub bank: BankArgs,
    /// ratio-mse, c2st, coverage, or truth; repeat for several.
    #[arg(long)]
    pub metric: Vec<String>,
    /// Training dataset whose θ range sets the ratio-MSE grid.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub n_pairs: Option<usize>,
    /// Posterior samples per pair for coverage.
    #[arg(long)]
    pub n_samples: Option<usize>,
    #[arg(long)]
    pub c2st_samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub bank: BankArgs,
    /// CSV of candidate parameters, one row each.
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    /// Size of the top sets compared in the overlap matrix.
    #[arg(long)]
    pub k: Option<usize>,
}
