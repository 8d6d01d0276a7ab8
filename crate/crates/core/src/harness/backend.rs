//! The boundary to the networks that turn images into features, class
//! posteriors and embeddings.
//!
//! Every backend answers four tasks for a run's images. `toy` computes them
//! directly from toy-flow PNGs. `store` reads precomputed feature stores, and
//! `external` asks a program to write those stores first.
//!
//! Store layout per task, under the backend directory:
//!
//! | task          | layout                                         |
//! |---------------|------------------------------------------------|
//! | features      | a feature store at the directory itself        |
//! | probabilities | a store with `kind: "probabilities"`           |
//! | alignment     | `image/` and `text/` stores keyed by image id  |
//! | preference    | `scores/` (one column) or `image/` + `text/`   |

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{BackendSpec, BackendsConfig, SELF_PROGRAM};
use super::protocol::write_json_atomic;
use crate::error::{Error, Result};
use crate::metrics::store::FeatureStore;
use crate::metrics::{
    clip_score, pick_score, pick_score_precomputed, FeatureMatrix, ProbabilityMatrix,
};
use crate::toyflow::codec::decode_png;
use crate::toyflow::reference::TOY_BACKEND;
use crate::toyflow::{Point, ToyModel};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageRef {
    pub id: String,
    pub file: PathBuf,
    pub prompt: String,
    pub class_id: u32,
}

/// The images of one run, plus where backends may write scratch output.
#[derive(Debug, Clone)]
pub struct RunImages {
    pub slug: String,
    pub work_dir: PathBuf,
    pub images: Vec<ImageRef>,
}

impl RunImages {
    pub fn ids(&self) -> Vec<String> {
        self.images.iter().map(|i| i.id.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Features,
    Probabilities,
    Alignment,
    Preference,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Features => "features",
            Task::Probabilities => "probabilities",
            Task::Alignment => "alignment",
            Task::Preference => "preference",
        }
    }
}

#[derive(Debug, Clone)]
pub enum Backend {
    Toy(Arc<ToyModel>),
    Store { name: String, path: String },
    External { name: String, program: String, args: Vec<String> },
}

#[derive(Serialize)]
struct ExternalRequest<'a> {
    schema_version: u32,
    task: &'a str,
    images: &'a [ImageRef],
    output_dir: &'a Path,
}

impl Backend {
    pub fn from_spec(spec: &BackendSpec) -> Result<Self> {
        Ok(match spec {
            BackendSpec::Toy { classes } => Backend::Toy(Arc::new(match classes {
                Some(p) => ToyModel::load(p)?,
                None => ToyModel::default_four(),
            })),
            BackendSpec::Store { name, path } => Backend::Store {
                name: name.clone(),
                path: path.clone(),
            },
            BackendSpec::External { name, program, args } => Backend::External {
                name: name.clone(),
                program: program.clone(),
                args: args.clone(),
            },
        })
    }

    /// Identifier used to pick reference features and key caches.
    pub fn name(&self) -> &str {
        match self {
            Backend::Toy(_) => TOY_BACKEND,
            Backend::Store { name, .. } | Backend::External { name, .. } => name,
        }
    }

    fn store_dir(&self, run: &RunImages, task: Task) -> Result<PathBuf> {
        match self {
            Backend::Toy(_) => unreachable!("toy backend has no stores"),
            Backend::Store { path, .. } => Ok(PathBuf::from(path.replace("{run}", &run.slug))),
            Backend::External { name, program, args } => {
                let dir = run.work_dir.join("backend").join(task.as_str());
                let out = dir.join("out");
                if out.exists() {
                    fs::remove_dir_all(&out).map_err(|e| Error::io(&out, e))?;
                }
                fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
                let request = dir.join("request.json");
                write_json_atomic(
                    &request,
                    &ExternalRequest {
                        schema_version: 1,
                        task: task.as_str(),
                        images: &run.images,
                        output_dir: &out,
                    },
                )?;
                let exe = if program == SELF_PROGRAM {
                    std::env::current_exe().map_err(|e| Error::io(program, e))?
                } else {
                    PathBuf::from(program)
                };
                let output = Command::new(&exe)
                    .args(args)
                    .arg(&request)
                    .output()
                    .map_err(|e| Error::RunFailed {
                        run_key: run.slug.clone(),
                        message: format!("backend {name}: cannot start {}: {e}", exe.display()),
                    })?;
                if !output.status.success() {
                    return Err(Error::RunFailed {
                        run_key: run.slug.clone(),
                        message: format!(
                            "backend {name} ({}) exited with {}: {}",
                            task.as_str(),
                            output.status,
                            String::from_utf8_lossy(&output.stderr).trim()
                        ),
                    });
                }
                Ok(out)
            }
        }
    }

    pub fn features(&self, run: &RunImages) -> Result<FeatureMatrix> {
        match self {
            Backend::Toy(_) => {
                let pts = toy_points(run)?;
                let data = pts.iter().flat_map(|p| p.iter().copied()).collect();
                FeatureMatrix::new(pts.len(), 2, data, run.ids())
            }
            _ => FeatureStore::open(self.store_dir(run, Task::Features)?)?.read_ids(&run.ids()),
        }
    }

    pub fn probabilities(&self, run: &RunImages) -> Result<ProbabilityMatrix> {
        match self {
            Backend::Toy(model) => {
                let rows: Vec<Vec<f64>> = toy_points(run)?.into_iter().map(|p| model.posterior(p)).collect();
                ProbabilityMatrix::from_row_vecs(&rows)
            }
            _ => FeatureStore::open(self.store_dir(run, Task::Probabilities)?)?
                .read_probabilities(&run.ids()),
        }
    }

    /// Paired (image, text) embeddings in image order.
    pub fn alignment(&self, run: &RunImages) -> Result<(FeatureMatrix, FeatureMatrix)> {
        match self {
            Backend::Toy(model) => toy_embeddings(model, run),
            _ => read_pair(&self.store_dir(run, Task::Alignment)?, &run.ids()),
        }
    }

    pub fn preference(&self, run: &RunImages, logit_scale: f64) -> Result<f64> {
        match self {
            Backend::Toy(model) => {
                let (img, txt) = toy_embeddings(model, run)?;
                pick_score(&img, &txt, logit_scale)
            }
            _ => {
                let dir = self.store_dir(run, Task::Preference)?;
                let scores = dir.join("scores");
                if scores.is_dir() {
                    let store = FeatureStore::open(&scores)?;
                    if store.cols() != 1 {
                        return Err(Error::DimensionMismatch(format!(
                            "preference scores store has {} columns, expected 1",
                            store.cols()
                        )));
                    }
                    pick_score_precomputed(store.read_ids(&run.ids())?.data())
                } else {
                    let (img, txt) = read_pair(&dir, &run.ids())?;
                    pick_score(&img, &txt, logit_scale)
                }
            }
        }
    }
}

fn read_pair(dir: &Path, ids: &[String]) -> Result<(FeatureMatrix, FeatureMatrix)> {
    let img = FeatureStore::open(dir.join("image"))?.read_ids(ids)?;
    let txt = FeatureStore::open(dir.join("text"))?.read_ids(ids)?;
    Ok((img, txt))
}

fn toy_points(run: &RunImages) -> Result<Vec<Point>> {
    run.images
        .par_iter()
        .map(|img| {
            let bytes = fs::read(&img.file).map_err(|e| Error::io(&img.file, e))?;
            decode_png(&bytes).map_err(|e| Error::parse(&img.file, e))
        })
        .collect()
}

fn word_match(text: &str, word: &str) -> bool {
    let is_word = |c: Option<char>| c.is_some_and(|c| c.is_alphanumeric());
    text.match_indices(word).any(|(i, _)| {
        !is_word(text[..i].chars().next_back()) && !is_word(text[i + word.len()..].chars().next())
    })
}

/// Class named by a prompt: the longest class name found at word boundaries.
fn toy_text_class(model: &ToyModel, prompt: &str) -> Result<usize> {
    let prompt = prompt.to_lowercase();
    let names: Vec<String> = model.classes.iter().map(|c| c.name.to_lowercase()).collect();
    let hits: Vec<usize> = (0..names.len()).filter(|&i| word_match(&prompt, &names[i])).collect();
    // a hit contained in a longer hit ("shark" in "tiger shark") does not count
    let kept: Vec<usize> = hits
        .iter()
        .copied()
        .filter(|&i| !hits.iter().any(|&j| j != i && names[j].len() > names[i].len() && names[j].contains(&names[i])))
        .collect();
    match kept.as_slice() {
        [i] => Ok(*i),
        [] => Err(Error::InvalidInput(format!("prompt `{prompt}` names no toy class"))),
        _ => Err(Error::InvalidInput(format!("prompt `{prompt}` names several toy classes"))),
    }
}

/// Image embedding = class posterior; text embedding = one-hot prompt class.
fn toy_embeddings(model: &ToyModel, run: &RunImages) -> Result<(FeatureMatrix, FeatureMatrix)> {
    let k = model.classes.len();
    let pts = toy_points(run)?;
    let mut img = Vec::with_capacity(pts.len() * k);
    let mut txt = vec![0.0; pts.len() * k];
    for (i, (p, r)) in pts.iter().zip(&run.images).enumerate() {
        img.extend(model.posterior(*p));
        txt[i * k + toy_text_class(model, &r.prompt)?] = 1.0;
    }
    Ok((
        FeatureMatrix::new(pts.len(), k, img, run.ids())?,
        FeatureMatrix::new(pts.len(), k, txt, run.ids())?,
    ))
}

/// Resolved backends for the four metric families.
#[derive(Debug, Clone)]
pub struct Backends {
    pub feature: Backend,
    pub classifier: Backend,
    pub alignment: Backend,
    pub preference: Backend,
}

impl Backends {
    pub fn from_config(cfg: &BackendsConfig) -> Result<Self> {
        Ok(Self {
            feature: Backend::from_spec(&cfg.feature)?,
            classifier: Backend::from_spec(&cfg.classifier)?,
            alignment: Backend::from_spec(&cfg.alignment)?,
            preference: Backend::from_spec(&cfg.preference)?,
        })
    }

    pub fn toy(model: ToyModel) -> Self {
        let b = Backend::Toy(Arc::new(model));
        Self {
            feature: b.clone(),
            classifier: b.clone(),
            alignment: b.clone(),
            preference: b,
        }
    }
}

/// CLIP score straight from a backend, for callers that only need alignment.
pub fn alignment_score(backend: &Backend, run: &RunImages) -> Result<f64> {
    let (img, txt) = backend.alignment(run)?;
    clip_score(&img, &txt)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prompt_class_lookup() {
        let m = ToyModel::default_four();
        assert_eq!(toy_text_class(&m, "a photo of a great white shark").unwrap(), 2);
        assert_eq!(toy_text_class(&m, "a photo of a tiger shark").unwrap(), 3);
        assert_eq!(toy_text_class(&m, "Can you generate a photo of a tench?").unwrap(), 0);
        assert!(toy_text_class(&m, "a photo of a tenches").is_err());
        assert!(toy_text_class(&m, "a tench and a goldfish").is_err());
    }

    #[test]
    fn store_backend_reads_by_id_and_reports_gaps() {
        use crate::metrics::store::{write_features, StoreKind, StoreWriter};
        let dir = tempfile::tempdir().unwrap();
        let run_dir = dir.path().join("run-a");
        let m = FeatureMatrix::new(2, 2, vec![1.0, 0.0, 0.0, 1.0], vec!["x".into(), "y".into()]).unwrap();
        write_features(run_dir.join("image"), &m).unwrap();
        write_features(run_dir.join("text"), &m).unwrap();
        let mut s = StoreWriter::create(run_dir.join("scores"), 1, StoreKind::Features).unwrap();
        s.push("x", &[18.0]).unwrap();
        s.push("y", &[22.0]).unwrap();
        s.finish().unwrap();
        let b = Backend::Store {
            name: "pre".into(),
            path: dir.path().join("{run}").to_string_lossy().into_owned(),
        };
        let img = |id: &str| ImageRef {
            id: id.into(),
            file: PathBuf::new(),
            prompt: String::new(),
            class_id: 0,
        };
        let run = RunImages {
            slug: "run-a".into(),
            work_dir: dir.path().into(),
            images: vec![img("y"), img("x")],
        };
        assert_eq!(alignment_score(&b, &run).unwrap(), 100.0);
        assert_eq!(b.preference(&run, 100.0).unwrap(), 20.0);
        let gap = RunImages {
            images: vec![img("x"), img("z")],
            ..run
        };
        match alignment_score(&b, &gap) {
            Err(Error::Coverage { missing }) => assert_eq!(missing, ["z"]),
            other => panic!("{other:?}"),
        }
    }
}
