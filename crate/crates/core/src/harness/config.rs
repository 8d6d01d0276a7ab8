//! `genbench.json` sweep configuration.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::prompt::PromptStyle;
use crate::error::{Error, Result};
use crate::key::Steps;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_CFG_VALUES: [f64; 7] = [1.0, 3.0, 6.0, 7.0, 9.0, 12.0, 15.0];
pub const DEFAULT_STEP_VALUES: [u32; 6] = [1, 5, 10, 15, 20, 25];
pub const WORKERS_ENV: &str = "GENBENCH_WORKERS";
/// Adapter program placeholder for the running `genbench` executable.
pub const SELF_PROGRAM: &str = "@self";

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_cfg_values() -> Vec<f64> {
    DEFAULT_CFG_VALUES.to_vec()
}

fn default_step_values() -> Vec<Steps> {
    DEFAULT_STEP_VALUES.iter().map(|&n| Steps::Fixed(n)).collect()
}

fn default_logit_scale() -> f64 {
    100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterSpec {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub id: String,
    pub family: String,
    #[serde(default)]
    pub prompt_style: PromptStyle,
    pub adapter: AdapterSpec,
    /// Guidance baked into the weights; grid points with another cfg are skipped.
    #[serde(default)]
    pub fixed_cfg: Option<f64>,
    /// The model picks its own step count; it gets one run per cfg.
    #[serde(default)]
    pub dynamic_steps: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRef {
    pub id: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BackendSpec {
    /// Decodes toy-flow PNGs; optional class file overrides the built-in model.
    Toy {
        #[serde(default)]
        classes: Option<PathBuf>,
    },
    /// Precomputed stores; `{run}` in `path` expands to the run slug.
    Store { name: String, path: String },
    /// A program that receives a request file and writes stores.
    External {
        name: String,
        program: String,
        #[serde(default)]
        args: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendsConfig {
    pub feature: BackendSpec,
    pub classifier: BackendSpec,
    pub alignment: BackendSpec,
    pub preference: BackendSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub workers: Option<usize>,
    pub models: Vec<ModelSpec>,
    #[serde(default = "default_cfg_values")]
    pub cfg_values: Vec<f64>,
    #[serde(default = "default_step_values")]
    pub step_values: Vec<Steps>,
    pub datasets: Vec<DatasetRef>,
    pub backends: BackendsConfig,
    #[serde(default = "default_logit_scale")]
    pub pick_logit_scale: f64,
    #[serde(default)]
    pub bounds: Option<PathBuf>,
}

impl Config {
    /// Parse, validate and resolve relative paths against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            Error::config(if field == "." { "<root>".into() } else { field }, e.inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != 1 {
            return Err(Error::config("schema_version", "must be 1"));
        }
        if self.models.is_empty() {
            return Err(Error::config("models", "at least one model required"));
        }
        let mut ids = HashSet::new();
        for (i, m) in self.models.iter().enumerate() {
            if m.id.trim().is_empty() {
                return Err(Error::config(format!("models[{i}].id"), "must be nonempty"));
            }
            if !ids.insert(m.id.as_str()) {
                return Err(Error::config(format!("models[{i}].id"), format!("duplicate model id `{}`", m.id)));
            }
            if m.family.trim().is_empty() {
                return Err(Error::config(format!("models[{i}].family"), "must be nonempty"));
            }
            if m.adapter.program.trim().is_empty() {
                return Err(Error::config(format!("models[{i}].adapter.program"), "must be nonempty"));
            }
            if let Some(c) = m.fixed_cfg {
                if !(c.is_finite() && c >= 1.0) {
                    return Err(Error::config(format!("models[{i}].fixed_cfg"), "must be ≥ 1"));
                }
            }
        }
        if self.cfg_values.is_empty() {
            return Err(Error::config("cfg_values", "must be nonempty"));
        }
        for (i, c) in self.cfg_values.iter().enumerate() {
            if !(c.is_finite() && *c >= 1.0) {
                return Err(Error::config(format!("cfg_values[{i}]"), format!("must be ≥ 1, got {c}")));
            }
            if self.cfg_values[..i].contains(c) {
                return Err(Error::config(format!("cfg_values[{i}]"), "duplicate value"));
            }
        }
        if self.step_values.is_empty() {
            return Err(Error::config("step_values", "must be nonempty"));
        }
        for (i, s) in self.step_values.iter().enumerate() {
            if *s == Steps::Dynamic {
                return Err(Error::config(
                    format!("step_values[{i}]"),
                    "use dynamic_steps on the model instead",
                ));
            }
            if self.step_values[..i].contains(s) {
                return Err(Error::config(format!("step_values[{i}]"), "duplicate value"));
            }
        }
        if self.datasets.is_empty() {
            return Err(Error::config("datasets", "at least one dataset required"));
        }
        let mut ds = HashSet::new();
        for (i, d) in self.datasets.iter().enumerate() {
            if !ds.insert(d.id.as_str()) {
                return Err(Error::config(format!("datasets[{i}].id"), format!("duplicate dataset id `{}`", d.id)));
            }
        }
        if !(self.pick_logit_scale > 0.0 && self.pick_logit_scale.is_finite()) {
            return Err(Error::config("pick_logit_scale", "must be positive"));
        }
        if self.workers == Some(0) {
            return Err(Error::config("workers", "must be at least 1"));
        }
        Ok(())
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(out) = self.out.as_mut() {
            join(out);
        }
        if let Some(b) = self.bounds.as_mut() {
            join(b);
        }
        for d in &mut self.datasets {
            join(&mut d.path);
        }
        for m in &mut self.models {
            resolve_program(&mut m.adapter.program, base);
        }
        for spec in [
            &mut self.backends.feature,
            &mut self.backends.classifier,
            &mut self.backends.alignment,
            &mut self.backends.preference,
        ] {
            match spec {
                BackendSpec::Toy { classes: Some(c) } => join(c),
                BackendSpec::Toy { classes: None } => {}
                BackendSpec::Store { path, .. } => {
                    if Path::new(path.as_str()).is_relative() {
                        *path = base.join(&*path).to_string_lossy().into_owned();
                    }
                }
                BackendSpec::External { program, .. } => resolve_program(program, base),
            }
        }
    }

    /// Worker budget: `GENBENCH_WORKERS`, then the config, then core count.
    pub fn worker_budget(&self) -> Result<usize> {
        if let Ok(v) = std::env::var(WORKERS_ENV) {
            return match v.trim().parse::<usize>() {
                Ok(n) if n >= 1 => Ok(n),
                _ => Err(Error::config(WORKERS_ENV, format!("must be a positive integer, got `{v}`"))),
            };
        }
        Ok(self
            .workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())))
    }
}

/// Programs given as relative paths (containing a separator) are resolved
/// against the config directory; bare names are left for `PATH` lookup.
fn resolve_program(program: &mut String, base: &Path) {
    if program == SELF_PROGRAM {
        return;
    }
    let p = Path::new(program.as_str());
    if p.is_relative() && p.components().count() > 1 {
        *program = base.join(p).to_string_lossy().into_owned();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema_version": 1,
        "models": [{"id": "toy", "family": "toy", "adapter": {"program": "@self", "args": ["toygen", "--job"]}}],
        "datasets": [{"id": "toy4", "path": "data/toy4"}],
        "backends": {
            "feature": {"kind": "toy"},
            "classifier": {"kind": "toy"},
            "alignment": {"kind": "toy"},
            "preference": {"kind": "toy"}
        }
    }"#;

    #[test]
    fn defaults() {
        let c = Config::from_json(MINIMAL).unwrap();
        assert_eq!(c.seed, 42);
        assert_eq!(c.cfg_values.len() * c.step_values.len(), 42);
        assert_eq!(c.pick_logit_scale, 100.0);
        assert_eq!(c.models[0].prompt_style, PromptStyle::Default);
    }

    fn err_field(json: &str) -> String {
        match Config::from_json(json) {
            Err(Error::Config { field, message }) => format!("{field}: {message}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn errors_name_the_field() {
        let typo = MINIMAL.replace("\"family\"", "\"famly\"");
        assert!(err_field(&typo).contains("famly"));
        let bad_cfg = MINIMAL.replace("\"models\"", "\"cfg_values\": [0.5], \"models\"");
        assert!(err_field(&bad_cfg).starts_with("cfg_values[0]"));
        let bad_kind = MINIMAL.replace("{\"kind\": \"toy\"}", "{\"kind\": \"toy\", \"colour\": 1}");
        assert!(err_field(&bad_kind).contains("colour"));
        let bad_steps = MINIMAL.replace("\"models\"", "\"step_values\": [0], \"models\"");
        assert!(err_field(&bad_steps).contains("step_values"));
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("genbench.json");
        std::fs::write(&p, MINIMAL).unwrap();
        let c = Config::load(&p).unwrap();
        assert_eq!(c.datasets[0].path, dir.path().join("data/toy4"));
        assert_eq!(c.models[0].adapter.program, SELF_PROGRAM);
    }

    #[test]
    fn shipped_schema_lists_every_field() {
        let schema: serde_json::Value =
            serde_json::from_str(include_str!("../../schema/genbench.schema.json")).unwrap();
        let keys = |v: &serde_json::Value| -> Vec<String> {
            let mut k: Vec<String> = v.as_object().unwrap().keys().cloned().collect();
            k.sort();
            k
        };
        let mut c = Config::from_json(MINIMAL).unwrap();
        c.out = Some("o".into());
        c.workers = Some(2);
        c.bounds = Some("b.json".into());
        c.models[0].fixed_cfg = Some(1.0);
        let v = serde_json::to_value(&c).unwrap();
        assert_eq!(keys(&v), keys(&schema["properties"]));
        assert_eq!(keys(&v["models"][0]), keys(&schema["$defs"]["model"]["properties"]));
        assert_eq!(keys(&v["backends"]), keys(&schema["properties"]["backends"]["properties"]));
    }
}
