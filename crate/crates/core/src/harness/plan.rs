use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{Config, ModelSpec};
use super::dataset::Dataset;
use super::prompt::{fill_template, render_prompt, EVAL_TEMPLATE};
use super::protocol::{JobFile, JobSample, PROTOCOL_VERSION};
use crate::error::{Error, Result};
use crate::key::{RunKey, Steps};

pub const RUNS_DIR: &str = "runs";

/// One generation run: a model at one (cfg, steps) point on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSpec {
    pub key: RunKey,
    pub family: String,
    pub model: ModelSpec,
    /// Guidance sent to the adapter; `None` for fixed-guidance models.
    pub job_cfg: Option<f64>,
    /// One sample per reference example, in dataset order.
    pub samples: Vec<JobSample>,
    /// Alignment prompts, parallel to `samples`.
    pub eval_prompts: Vec<String>,
    pub prompt_template: String,
    pub output_dir: PathBuf,
}

impl RunSpec {
    pub fn job(&self) -> JobFile {
        JobFile {
            schema_version: PROTOCOL_VERSION,
            model_id: self.model.id.clone(),
            cfg: self.job_cfg,
            steps: self.key.steps,
            seed: self.key.seed,
            samples: self.samples.clone(),
            output_dir: self.output_dir.join("images"),
        }
    }
}

pub fn run_dir(out: &Path, key: &RunKey) -> PathBuf {
    out.join(RUNS_DIR).join(key.slug())
}

/// Load every configured dataset, checking its declared id.
pub fn load_datasets(config: &Config) -> Result<Vec<Dataset>> {
    config
        .datasets
        .iter()
        .map(|r| {
            let ds = Dataset::load(&r.path)?;
            if ds.id() != r.id {
                return Err(Error::UnknownDataset(format!(
                    "{} declares id `{}`, config expects `{}`",
                    r.path.display(),
                    ds.id(),
                    r.id
                )));
            }
            Ok(ds)
        })
        .collect()
}

/// (job cfg, key cfg) pairs for one model.
fn cfg_points(model: &ModelSpec, grid: &[f64]) -> Vec<(Option<f64>, f64)> {
    match model.fixed_cfg {
        None => grid.iter().map(|&c| (Some(c), c)).collect(),
        Some(fixed) => {
            if !grid.contains(&fixed) {
                tracing::info!(model = %model.id, fixed, "no grid cfg matches; running the fixed value once");
            }
            vec![(None, fixed)]
        }
    }
}

fn step_points(model: &ModelSpec, grid: &[Steps]) -> Vec<Steps> {
    if model.dynamic_steps {
        vec![Steps::Dynamic]
    } else {
        grid.to_vec()
    }
}

/// Cartesian sweep in model → dataset → cfg → steps order.
pub fn plan_sweep(config: &Config, datasets: &[Dataset], out: &Path) -> Result<Vec<RunSpec>> {
    // adapters run inside the run directory, so every path they see is absolute
    let out = &std::path::absolute(out).map_err(|e| Error::io(out, e))?;
    let mut specs = Vec::new();
    for model in &config.models {
        let template = model.prompt_style.template().to_string();
        for ds in datasets {
            let mut samples = Vec::with_capacity(ds.examples().len());
            let mut eval_prompts = Vec::with_capacity(ds.examples().len());
            for ex in ds.examples() {
                samples.push(JobSample {
                    id: ex.id.clone(),
                    class_id: ex.class_id,
                    class_name: ex.class_name.clone(),
                    prompt: render_prompt(model.prompt_style, &ex.class_name)?,
                });
                eval_prompts.push(fill_template(EVAL_TEMPLATE, &ex.class_name)?);
            }
            for (job_cfg, key_cfg) in cfg_points(model, &config.cfg_values) {
                for steps in step_points(model, &config.step_values) {
                    let key = RunKey::new(&model.id, key_cfg, steps, ds.id(), config.seed);
                    specs.push(RunSpec {
                        output_dir: run_dir(out, &key),
                        key,
                        family: model.family.clone(),
                        model: model.clone(),
                        job_cfg,
                        samples: samples.clone(),
                        eval_prompts: eval_prompts.clone(),
                        prompt_template: template.clone(),
                    });
                }
            }
        }
    }
    if specs.is_empty() {
        return Err(Error::Validation("sweep plan is empty".into()));
    }
    let mut slugs = HashSet::new();
    for s in &specs {
        if !slugs.insert(s.key.slug()) {
            return Err(Error::Validation(format!("run key `{}` is not unique", s.key)));
        }
    }
    Ok(specs)
}
