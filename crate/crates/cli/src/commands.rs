use std::collections::BTreeMap;

use ndarray::{Array2, Axis};
use serde_json::{json, Value};

use nre_core::diagnostics::{
    c2st_with, default_levels, expected_coverage, log_posterior_at_truth, rank_candidates, ratio_mse_protocol,
    DiagnosticsReport, McmcPosterior,
};
use nre_core::estimators::{to_json, train, LogRatio};
use nre_core::numcore::Rng;
use nre_core::posterior::PosteriorEvaluator;
use nre_core::samplers::{hmc_sample, rwmh_sample, ChainSet, LogRatioTarget};
use nre_core::tasks::{generate_dataset, Dataset, TaskSpec};

use crate::args::{Cli, Command};
use crate::config::{Metric, RunConfig, SamplerKind};
use crate::run::{load_models, read_candidates, require_task, require_x_obs, LoadedModel, RunDir};
use crate::CliError;

/// Stream keys under the master seed for draws that are not owned by a
/// component config.
const REFERENCE_STREAM: u64 = 101;
const PAIRS_STREAM: u64 = 102;
const C2ST_STREAM: u64 = 103;

pub fn execute(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start {n} workers: {e}")))?;
    }
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cli.command.apply(&mut cfg)?;
    cfg.propagate_seed();
    let name = cli.command.name();
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| cli.output_root.join(name));
    cfg.output = Some(out);
    let files = match cli.command {
        Command::Simulate(_) => simulate(&mut cfg)?,
        Command::Train(_) => train_cmd(&mut cfg)?,
        Command::Sample(_) => sample(&mut cfg)?,
        Command::Posterior(_) => posterior(&mut cfg)?,
        Command::Diagnose(_) => diagnose(&mut cfg)?,
        Command::Rank(_) => rank(&mut cfg)?,
    };
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

/// Prints the master seed and the resolved config before any work starts.
fn announce(cfg: &RunConfig) -> Result<(), CliError> {
    println!("master seed: {}", cfg.seed);
    println!("# resolved config\n{}", cfg.to_toml()?);
    Ok(())
}

fn out_dir(cfg: &RunConfig) -> Result<RunDir, CliError> {
    RunDir::create(cfg.output.as_deref().expect("output resolved before dispatch"))
}

fn simulate(cfg: &mut RunConfig) -> Result<Vec<std::path::PathBuf>, CliError> {
    let task = require_task(cfg)?;
    if cfg.simulate.n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    announce(cfg)?;
    let data = generate_dataset(&task, cfg.simulate.n, cfg.seed)?;
    let mut run = out_dir(cfg)?;
    data.write(&run.path("dataset.csv"))?;
    run.path("dataset.json");
    run.finish("simulate", cfg, json!({ "task": task.name(), "n": data.len() }))
}

fn train_cmd(cfg: &mut RunConfig) -> Result<Vec<std::path::PathBuf>, CliError> {
    let data = match &cfg.inputs.data {
        Some(path) => {
            let data = Dataset::read(path)?;
            match &cfg.task {
                Some(id) if *id != data.task => {
                    return Err(CliError::Usage(format!(
                        "{} holds {} simulations, expected {}",
                        path.display(),
                        data.task.name(),
                        id.name()
                    )))
                }
                _ => cfg.task = Some(data.task.clone()),
            }
            Some(data)
        }
        None => None,
    };
    let task = require_task(cfg)?;
    let kind = cfg.estimator.resolve()?;
    cfg.train.validate()?;
    announce(cfg)?;
    let data = match data {
        Some(d) => d,
        None => generate_dataset(&task, cfg.simulate.n, cfg.seed)?,
    };
    let (mut est, curve) = train(&data, &task.prior, kind, &cfg.train)?;
    est.antisymmetric = cfg.estimator.antisymmetric;
    let mut run = out_dir(cfg)?;
    run.write("checkpoint.json", &to_json(&est)?)?;
    run.write("loss.csv", &curve.to_csv())?;
    let digest = nre_core::estimators::checkpoint_digest(&run.dir.join("checkpoint.json"))?;
    let extra = json!({
        "task": task.name(),
        "estimator": kind.label(),
        "n_simulations": data.len(),
        "best_epoch": est.training.best_epoch,
        "best_val_loss": est.training.best_val_loss,
        "checkpoint_sha256": digest,
    });
    run.finish("train", cfg, extra)
}

fn single(models: &[LoadedModel], command: &str) -> Result<(), CliError> {
    if models.len() != 1 {
        return Err(CliError::Usage(format!(
            "{command} takes exactly one estimator, got {}",
            models.len()
        )));
    }
    Ok(())
}

fn checkpoint_info(m: &LoadedModel) -> Value {
    match &m.checkpoint {
        Some((path, digest)) => json!({ "label": m.label, "path": path, "sha256": digest }),
        None => json!({ "label": m.label, "oracle": true }),
    }
}

fn run_sampler(cfg: &RunConfig, model: &dyn LogRatio, task: &TaskSpec, x: &[f64]) -> Result<ChainSet, CliError> {
    let target = LogRatioTarget::new(model, x.to_vec(), task.prior.clone())?;
    Ok(match cfg.sampler.kind {
        SamplerKind::Mh => rwmh_sample(&target, &cfg.sampler.mh)?,
        SamplerKind::Hmc => hmc_sample(&target, &cfg.sampler.hmc)?,
    })
}

fn sample(cfg: &mut RunConfig) -> Result<Vec<std::path::PathBuf>, CliError> {
    let (task, models) = load_models(cfg)?;
    single(&models, "sample")?;
    let x = require_x_obs(cfg, &task)?;
    announce(cfg)?;
    let chains = run_sampler(cfg, models[0].model.as_ref(), &task, &x)?;
    let mut run = out_dir(cfg)?;
    chains.write(&run.dir)?;
    for k in 0..chains.n_chains() {
        run.path(&format!("chain_{k}.csv"));
    }
    let text = std::fs::read_to_string(run.dir.join("manifest.json")).map_err(nre_core::Error::from)?;
    let mut extra: Value = serde_json::from_str(&text).map_err(nre_core::Error::from)?;
    if let Some(obj) = extra.as_object_mut() {
        if let Some(c) = obj.remove("config") {
            obj.insert("sampler_config".into(), c);
        }
        obj.insert("mean_acceptance".into(), json!(chains.mean_acceptance()));
        obj.insert("estimator".into(), checkpoint_info(&models[0]));
        obj.insert("x_obs".into(), json!(x));
    }
    run.finish("sample", cfg, extra)
}

fn posterior(cfg: &mut RunConfig) -> Result<Vec<std::path::PathBuf>, CliError> {
    let (task, models) = load_models(cfg)?;
    single(&models, "posterior")?;
    let x = require_x_obs(cfg, &task)?;
    let (box_low, box_high) = task.prior.plotting_box();
    cfg.posterior.low.get_or_insert(box_low);
    cfg.posterior.high.get_or_insert(box_high);
    announce(cfg)?;
    let ev = PosteriorEvaluator::new(
        models[0].model.as_ref(),
        task.prior.clone(),
        cfg.posterior.mc_samples,
        cfg.bank_seed(),
    )?;
    let p = &cfg.posterior;
    let grid = ev.grid(
        &x,
        p.low.as_deref().unwrap_or_default(),
        p.high.as_deref().unwrap_or_default(),
        p.resolution,
    )?;
    let mut run = out_dir(cfg)?;
    run.write("posterior_grid.csv", &grid.to_csv())?;
    let extra = json!({
        "estimator": checkpoint_info(&models[0]),
        "evaluator": ev.info(),
        "x_obs": x,
    });
    run.finish("posterior", cfg, extra)
}

/// `n` rows spread evenly over `draws`.
fn spread_rows(draws: &Array2<f64>, n: usize) -> Result<Array2<f64>, CliError> {
    if draws.nrows() < n {
        return Err(CliError::Usage(format!(
            "sampler produced {} draws, C2ST needs {n}; raise --n-steps or --n-chains",
            draws.nrows()
        )));
    }
    let idx: Vec<usize> = (0..n).map(|i| i * draws.nrows() / n).collect();
    Ok(draws.select(Axis(0), &idx))
}

fn diagnose(cfg: &mut RunConfig) -> Result<Vec<std::path::PathBuf>, CliError> {
    let (task, models) = load_models(cfg)?;
    let metrics = cfg.diagnostics.metrics.clone();
    if metrics.is_empty() {
        return Err(CliError::Usage("no metric selected".into()));
    }
    let x = if metrics.contains(&Metric::C2st) {
        Some(require_x_obs(cfg, &task)?)
    } else {
        None
    };
    let data = cfg.inputs.data.as_ref().map(|p| Dataset::read(p)).transpose()?;
    announce(cfg)?;
    let d = &cfg.diagnostics;
    let master = Rng::new(cfg.seed);
    let mut report = DiagnosticsReport::new(task.name());
    report.seeds.insert("master".into(), cfg.seed);
    report.seeds.insert("bank".into(), cfg.bank_seed());
    let mut run = out_dir(cfg)?;
    let mut blocks: BTreeMap<&'static str, BTreeMap<String, Value>> = BTreeMap::new();
    for m in &models {
        if let Some((_, digest)) = &m.checkpoint {
            report.checkpoints.insert(m.label.clone(), digest.clone());
        }
        let ev = PosteriorEvaluator::new(
            m.model.as_ref(),
            task.prior.clone(),
            cfg.posterior.mc_samples,
            cfg.bank_seed(),
        )?;
        report.evaluators.insert(m.label.clone(), ev.info());
        for metric in &metrics {
            let block = match metric {
                Metric::RatioMse => {
                    let (low, high) = match &data {
                        Some(ds) => {
                            let col = ds.thetas.column(0);
                            (
                                col.fold(f64::INFINITY, |a, &b| a.min(b)),
                                col.fold(f64::NEG_INFINITY, |a, &b| a.max(b)),
                            )
                        }
                        None => {
                            let (l, h) = task.prior.plotting_box();
                            (l[0], h[0])
                        }
                    };
                    serde_json::to_value(ratio_mse_protocol(m.model.as_ref(), &task, low, high, &d.ratio_mse)?)
                        .map_err(nre_core::Error::from)?
                }
                Metric::C2st => {
                    let x = x.as_deref().expect("observation checked above");
                    let reference = task.sample_posterior(x, d.c2st_samples, &mut master.split(REFERENCE_STREAM))?;
                    let chains = run_sampler(cfg, m.model.as_ref(), &task, x)?;
                    report
                        .warnings
                        .extend(chains.warnings.iter().map(|w| format!("{}: {w}", m.label)));
                    let approx = spread_rows(&chains.pooled(), d.c2st_samples)?;
                    let result = c2st_with(
                        approx.view(),
                        reference.view(),
                        master.split(C2ST_STREAM).seed(),
                        &d.c2st,
                    )?;
                    json!({
                        "accuracy": result.accuracy,
                        "fold_accuracies": result.fold_accuracies,
                        "dropped_features": result.dropped_features,
                        "sampler": chains.sampler,
                        "mean_acceptance": chains.mean_acceptance(),
                        "divergences": chains.total_divergences(),
                    })
                }
                Metric::Coverage => {
                    let approx = McmcPosterior {
                        evaluator: &ev,
                        chains: d.coverage_chains.clone(),
                        pilot: (d.coverage_pilot.burn_in > 0).then(|| d.coverage_pilot.clone()),
                    };
                    let mut curve =
                        expected_coverage(&approx, &task, d.n_pairs, d.n_samples, &default_levels(), cfg.seed)?;
                    curve.mc_samples = ev.info().mc_samples;
                    run.write(&format!("coverage_{}.csv", m.label), &curve.to_csv())?;
                    let mut v = serde_json::to_value(&curve).map_err(nre_core::Error::from)?;
                    v["max_deviation"] = json!(curve.max_deviation());
                    v
                }
                Metric::Truth => {
                    let pairs = generate_dataset(&task, d.n_pairs, master.split(PAIRS_STREAM).seed())?;
                    let summary =
                        log_posterior_at_truth(|x, t| ev.log_posterior(x, t), pairs.thetas.view(), pairs.xs.view())?;
                    serde_json::to_value(summary).map_err(nre_core::Error::from)?
                }
            };
            blocks.entry(metric.key()).or_default().insert(m.label.clone(), block);
        }
    }
    for (key, block) in &blocks {
        report.insert_metric(key, block)?;
    }
    report.write(&run.path("report.json"))?;
    let extra = json!({
        "estimators": models.iter().map(checkpoint_info).collect::<Vec<_>>(),
        "metrics": metrics,
    });
    run.finish("diagnose", cfg, extra)
}

fn rank(cfg: &mut RunConfig) -> Result<Vec<std::path::PathBuf>, CliError> {
    let (task, models) = load_models(cfg)?;
    let x = require_x_obs(cfg, &task)?;
    let path = cfg
        .inputs
        .candidates
        .clone()
        .ok_or_else(|| CliError::Usage("no candidates: pass --candidates".into()))?;
    let candidates = read_candidates(&path)?;
    if candidates.ncols() != task.theta_dim {
        return Err(CliError::Usage(format!(
            "candidates have {} columns, task {} has {} parameters",
            candidates.ncols(),
            task.name(),
            task.theta_dim
        )));
    }
    announce(cfg)?;
    let evaluators = models
        .iter()
        .map(|m| {
            PosteriorEvaluator::new(
                m.model.as_ref(),
                task.prior.clone(),
                cfg.posterior.mc_samples,
                cfg.bank_seed(),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let labelled: Vec<_> = models.iter().map(|m| m.label.clone()).zip(evaluators.iter()).collect();
    let table = rank_candidates(&labelled, &x, candidates.view(), cfg.rank.k)?;
    let mut run = out_dir(cfg)?;
    run.write("ranking.csv", &table.to_csv())?;
    run.write("overlap.csv", &table.overlap_csv())?;
    let top: BTreeMap<&str, &[usize]> = table
        .estimators
        .iter()
        .zip(&table.order)
        .map(|(e, o)| (e.as_str(), &o[..table.k]))
        .collect();
    let extra = json!({
        "estimators": models.iter().map(checkpoint_info).collect::<Vec<_>>(),
        "evaluators": evaluators.iter().map(|e| e.info()).collect::<Vec<_>>(),
        "k": table.k,
        "top_k": top,
        "tie_break": "equal scores are ordered by candidate index (row order of the candidates file)",
        "x_obs": x,
    });
    run.finish("rank", cfg, extra)
}
