//! Input parsing, model loading, and the per-run output directory with its
//! resolved config and manifest.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde_json::{json, Value};

use nre_core::estimators::{self, checkpoint_digest, ExactRatio, LogRatio};
use nre_core::tasks::TaskSpec;

use crate::config::RunConfig;
use crate::CliError;

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

/// Comma-separated numbers, or the path of a CSV holding exactly one
/// numeric row (an optional header row is skipped).
pub fn parse_x_obs(text: &str) -> Result<Vec<f64>, CliError> {
    if let Some(values) = parse_numbers(text) {
        return Ok(values);
    }
    let rows = read_numeric_rows(Path::new(text))?;
    match rows.as_slice() {
        [row] => Ok(row.clone()),
        _ => Err(CliError::Usage(format!(
            "{text} must hold exactly one row of numbers, found {}",
            rows.len()
        ))),
    }
}

fn parse_numbers(text: &str) -> Option<Vec<f64>> {
    text.split(',').map(|v| v.trim().parse::<f64>().ok()).collect()
}

/// Rows of a headerless or single-header CSV.
pub fn read_numeric_rows(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_numbers(line) {
            Some(row) => rows.push(row),
            None if i == 0 => {}
            None => {
                return Err(nre_core::Error::Data(format!("{}:{}: not a row of numbers", path.display(), i + 1)).into())
            }
        }
    }
    Ok(rows)
}

pub fn read_candidates(path: &Path) -> Result<Array2<f64>, CliError> {
    let rows = read_numeric_rows(path)?;
    let width = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || rows.iter().any(|r| r.len() != width) {
        return Err(nre_core::Error::Data(format!("{} must hold rows of equal length", path.display())).into());
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Array2::from_shape_vec((flat.len() / width, width), flat).expect("rows of equal length"))
}

pub struct LoadedModel {
    pub label: String,
    pub model: Box<dyn LogRatio>,
    pub checkpoint: Option<(PathBuf, String)>,
}

/// Loads every checkpoint (and the exact oracle when requested), checks that
/// they share one task, and records it in `cfg.task`.
pub fn load_models(cfg: &mut RunConfig) -> Result<(TaskSpec, Vec<LoadedModel>), CliError> {
    let mut models = Vec::new();
    let mut task_id = cfg.task.clone();
    let mut used = BTreeSet::new();
    for path in &cfg.inputs.checkpoints {
        let est = estimators::load(path)?;
        match &task_id {
            Some(id) if *id != est.task => {
                return Err(CliError::Usage(format!(
                    "{} was trained on {}, expected {}",
                    path.display(),
                    est.task.name(),
                    id.name()
                )))
            }
            _ => task_id = Some(est.task.clone()),
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("model").to_string();
        let mut label = stem.clone();
        let mut n = 1;
        while !used.insert(label.clone()) {
            label = format!("{stem}_{n}");
            n += 1;
        }
        models.push(LoadedModel {
            label,
            model: Box::new(est),
            checkpoint: Some((path.clone(), checkpoint_digest(path)?)),
        });
    }
    let id = task_id.ok_or_else(|| CliError::Usage("no task: pass --task or --checkpoint".into()))?;
    let task = TaskSpec::from_id(&id)?;
    if cfg.inputs.oracle {
        let mut label = "oracle".to_string();
        while !used.insert(label.clone()) {
            label.push('_');
        }
        models.push(LoadedModel {
            label,
            model: Box::new(ExactRatio::pairwise(task.clone())),
            checkpoint: None,
        });
    }
    if models.is_empty() {
        return Err(CliError::Usage("no estimator: pass --checkpoint or --oracle".into()));
    }
    cfg.task = Some(id);
    Ok((task, models))
}

pub fn require_task(cfg: &RunConfig) -> Result<TaskSpec, CliError> {
    let id = cfg
        .task
        .as_ref()
        .ok_or_else(|| CliError::Usage("no task: pass --task".into()))?;
    Ok(TaskSpec::from_id(id)?)
}

pub fn require_x_obs(cfg: &RunConfig, task: &TaskSpec) -> Result<Vec<f64>, CliError> {
    let x = cfg
        .inputs
        .x_obs
        .clone()
        .ok_or_else(|| CliError::Usage("no observation: pass --x-obs".into()))?;
    if x.len() != task.x_dim {
        return Err(CliError::Usage(format!(
            "observation has {} values, task {} expects {}",
            x.len(),
            task.name(),
            task.x_dim
        )));
    }
    Ok(x)
}

/// Output directory of one command invocation. Every file it writes is
/// listed in `manifest.json`.
pub struct RunDir {
    pub dir: PathBuf,
    files: Vec<String>,
}

impl RunDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.path(name);
        fs::write(path, contents).map_err(|e| nre_core::Error::from(e).into())
    }

    /// Writes `config.toml` and `manifest.json`. Keys of `extra` are merged
    /// into the manifest.
    pub fn finish(mut self, command: &str, cfg: &RunConfig, extra: Value) -> Result<Vec<PathBuf>, CliError> {
        self.write("config.toml", &cfg.to_toml()?)?;
        let config = serde_json::to_value(cfg).map_err(nre_core::Error::from)?;
        let mut manifest = json!({
            "format_version": MANIFEST_FORMAT_VERSION,
            "command": command,
            "master_seed": cfg.seed,
            "config_digest": cfg.digest()?,
            "config": config,
        });
        if let (Value::Object(m), Value::Object(e)) = (&mut manifest, extra) {
            for (k, v) in e {
                m.entry(k).or_insert(v);
            }
        }
        let mut files = self.files.clone();
        files.push("manifest.json".into());
        manifest["files"] = json!(files);
        let mut text = serde_json::to_string_pretty(&manifest).map_err(nre_core::Error::from)?;
        text.push('\n');
        fs::write(self.dir.join("manifest.json"), text).map_err(nre_core::Error::from)?;
        Ok(files.iter().map(|f| self.dir.join(f)).collect())
    }
}
