//! Run execution through adapters, ingestion of pre-generated images, and
//! the per-run manifest.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Component, Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::SELF_PROGRAM;
use super::plan::RunSpec;
use super::protocol::{
    read_json, write_json_atomic, JobFile, ResultFile, ResultStatus, JOB_FILE,
};
use crate::error::{Error, Result};
use crate::key::RunKey;

pub const MANIFEST_FILE: &str = "run_manifest.json";
pub const IMAGES_DIR: &str = "images";
pub const INGEST_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "webp"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Complete,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunSource {
    Adapter,
    Ingest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub id: String,
    /// Relative to the run directory.
    pub path: PathBuf,
    pub class_id: u32,
    /// Text the image is scored against for alignment.
    pub prompt: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NfeStats {
    pub mean: f64,
    pub min: u64,
    pub max: u64,
}

impl NfeStats {
    pub fn from_counts(counts: &[u64]) -> Option<Self> {
        let min = *counts.iter().min()?;
        let max = *counts.iter().max()?;
        let mean = counts.iter().map(|&c| c as f64).sum::<f64>() / counts.len() as f64;
        Some(Self { mean, min, max })
    }
}

/// Generations per class. Reference sets with unequal class sizes are kept
/// as-is (one generation per example) and flagged here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassBalance {
    pub classes: usize,
    pub min_per_class: usize,
    pub max_per_class: usize,
    pub imbalanced: bool,
}

impl ClassBalance {
    fn of(spec: &RunSpec) -> Self {
        let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
        for s in &spec.samples {
            *counts.entry(s.class_id).or_insert(0) += 1;
        }
        let min = counts.values().copied().min().unwrap_or(0);
        let max = counts.values().copied().max().unwrap_or(0);
        Self {
            classes: counts.len(),
            min_per_class: min,
            max_per_class: max,
            imbalanced: min != max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub key: RunKey,
    pub family: String,
    pub status: RunStatus,
    pub source: RunSource,
    pub spec_fingerprint: String,
    pub images: Vec<ImageEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nfe_stats: Option<NfeStats>,
    pub class_balance: ClassBalance,
    pub wall_time_secs: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl RunManifest {
    pub fn load(run_dir: &Path) -> Result<Self> {
        read_json(&run_dir.join(MANIFEST_FILE))
    }

    pub fn is_complete(&self) -> bool {
        self.status == RunStatus::Complete
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    /// False when an existing valid manifest made the run a no-op.
    pub invoked: bool,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Hash of everything that determines the adapter's output.
pub fn spec_fingerprint(spec: &RunSpec) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&spec.job())?);
    h.update(serde_json::to_vec(&spec.model.adapter)?);
    h.update(serde_json::to_vec(&spec.eval_prompts)?);
    Ok(hex::encode(h.finalize()))
}

fn images_verify(run_dir: &Path, m: &RunManifest) -> bool {
    m.images
        .par_iter()
        .all(|e| sha256_file(&run_dir.join(&e.path)).is_ok_and(|h| h == e.sha256))
}

fn existing_valid(spec: &RunSpec, fingerprint: &str) -> Option<RunManifest> {
    let m = RunManifest::load(&spec.output_dir).ok()?;
    (m.is_complete()
        && m.spec_fingerprint == fingerprint
        && m.images.len() == spec.samples.len()
        && images_verify(&spec.output_dir, &m))
    .then_some(m)
}

fn resolve_program(program: &str) -> Result<PathBuf> {
    if program == SELF_PROGRAM {
        std::env::current_exe().map_err(|e| Error::io(program, e))
    } else {
        Ok(PathBuf::from(program))
    }
}

fn tail(bytes: &[u8], limit: usize) -> String {
    let s = String::from_utf8_lossy(bytes);
    let s = s.trim();
    match s.char_indices().rev().nth(limit) {
        Some((i, _)) => format!("…{}", &s[i..]),
        None => s.to_string(),
    }
}

fn safe_relative(p: &Path) -> bool {
    !p.as_os_str().is_empty() && p.components().all(|c| matches!(c, Component::Normal(_)))
}

fn preview(ids: &[String]) -> String {
    let shown: Vec<&str> = ids.iter().take(20).map(String::as_str).collect();
    let more = ids.len().saturating_sub(shown.len());
    if more > 0 {
        format!("{} (+{more} more)", shown.join(", "))
    } else {
        shown.join(", ")
    }
}

/// Check the `(id, path)` pairs produced for a run against its sample plan
/// and hash them into manifest entries.
fn build_entries(
    spec: &RunSpec,
    produced: Vec<(String, PathBuf)>,
    fail: impl Fn(String) -> Error + Sync,
) -> Result<Vec<ImageEntry>> {
    let mut by_id: HashMap<String, PathBuf> = HashMap::new();
    let mut duplicates = BTreeSet::new();
    for (id, path) in produced {
        if by_id.insert(id.clone(), path).is_some() {
            duplicates.insert(id);
        }
    }
    let expected: BTreeSet<&str> = spec.samples.iter().map(|s| s.id.as_str()).collect();
    let missing: Vec<String> = spec
        .samples
        .iter()
        .filter(|s| !by_id.contains_key(&s.id))
        .map(|s| s.id.clone())
        .collect();
    let mut extra: Vec<String> = by_id
        .keys()
        .filter(|id| !expected.contains(id.as_str()))
        .cloned()
        .collect();
    extra.sort();
    let mut problems = Vec::new();
    if !duplicates.is_empty() {
        problems.push(format!("duplicate ids: {}", preview(&duplicates.into_iter().collect::<Vec<_>>())));
    }
    if !missing.is_empty() {
        problems.push(format!("missing {} id(s): {}", missing.len(), preview(&missing)));
    }
    if !extra.is_empty() {
        problems.push(format!("unexpected {} id(s): {}", extra.len(), preview(&extra)));
    }
    if !problems.is_empty() {
        return Err(fail(problems.join("; ")));
    }
    spec.samples
        .par_iter()
        .zip(spec.eval_prompts.par_iter())
        .map(|(s, prompt)| {
            let rel = by_id[&s.id].clone();
            let abs = spec.output_dir.join(&rel);
            if !abs.is_file() {
                return Err(fail(format!("image for {} not found at {}", s.id, abs.display())));
            }
            Ok(ImageEntry {
                id: s.id.clone(),
                sha256: sha256_file(&abs)?,
                path: rel,
                class_id: s.class_id,
                prompt: prompt.clone(),
            })
        })
        .collect()
}

fn manifest_for(spec: &RunSpec, fingerprint: String, source: RunSource) -> RunManifest {
    RunManifest {
        schema_version: 1,
        key: spec.key.clone(),
        family: spec.family.clone(),
        status: RunStatus::Failed,
        source,
        spec_fingerprint: fingerprint,
        images: Vec::new(),
        nfe_stats: None,
        class_balance: ClassBalance::of(spec),
        wall_time_secs: 0.0,
        message: None,
    }
}

/// Generate a run through its adapter unless a valid manifest already exists.
pub fn execute_run(spec: &RunSpec) -> Result<RunOutcome> {
    let fingerprint = spec_fingerprint(spec)?;
    if let Some(manifest) = existing_valid(spec, &fingerprint) {
        tracing::debug!(run = %spec.key, "manifest up to date; skipping");
        return Ok(RunOutcome {
            manifest,
            invoked: false,
        });
    }
    let run_dir = &spec.output_dir;
    let images_dir = run_dir.join(IMAGES_DIR);
    if images_dir.exists() {
        fs::remove_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;
    }
    fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;
    let job_path = run_dir.join(JOB_FILE);
    write_json_atomic(&job_path, &spec.job())?;
    let result_path = JobFile::result_path(&job_path);
    if result_path.exists() {
        fs::remove_file(&result_path).map_err(|e| Error::io(&result_path, e))?;
    }

    let mut manifest = manifest_for(spec, fingerprint, RunSource::Adapter);
    let key = spec.key.to_string();
    let run_failed = |message: String| Error::RunFailed {
        run_key: key.clone(),
        message,
    };
    let started = Instant::now();
    let outcome = (|| {
        let program = resolve_program(&spec.model.adapter.program)?;
        tracing::info!(run = %spec.key, program = %program.display(), "invoking adapter");
        let output = Command::new(&program)
            .args(&spec.model.adapter.args)
            .arg(&job_path)
            .current_dir(run_dir)
            .output()
            .map_err(|e| run_failed(format!("cannot start {}: {e}", program.display())))?;
        if !output.status.success() {
            return Err(run_failed(format!(
                "adapter exited with {}; stderr: {}",
                output.status,
                tail(&output.stderr, 2000)
            )));
        }
        let result = ResultFile::load(&result_path)
            .map_err(|e| run_failed(format!("unreadable result file: {e}")))?;
        if result.status != ResultStatus::Ok {
            return Err(run_failed(format!(
                "adapter reported error: {}",
                result.message.as_deref().unwrap_or("no message")
            )));
        }
        let incomplete = |message: String| Error::IncompleteRun {
            run_key: key.clone(),
            message,
        };
        let mut produced = Vec::with_capacity(result.images.len());
        for img in &result.images {
            if !safe_relative(&img.file) {
                return Err(incomplete(format!("image path {} escapes the output dir", img.file.display())));
            }
            produced.push((img.id.clone(), Path::new(IMAGES_DIR).join(&img.file)));
        }
        let images = build_entries(spec, produced, incomplete)?;
        let nfe_stats = match &result.nfe {
            None => None,
            Some(n) if n.len() == result.images.len() => NfeStats::from_counts(n),
            Some(n) => {
                return Err(Error::IncompleteRun {
                    run_key: key.clone(),
                    message: format!("{} nfe entries for {} images", n.len(), result.images.len()),
                })
            }
        };
        Ok((images, nfe_stats))
    })();
    manifest.wall_time_secs = started.elapsed().as_secs_f64();
    match outcome {
        Ok((images, nfe_stats)) => {
            manifest.images = images;
            manifest.nfe_stats = nfe_stats;
            manifest.status = RunStatus::Complete;
            write_json_atomic(&run_dir.join(MANIFEST_FILE), &manifest)?;
            Ok(RunOutcome {
                manifest,
                invoked: true,
            })
        }
        Err(e) => {
            manifest.message = Some(e.to_string());
            write_json_atomic(&run_dir.join(MANIFEST_FILE), &manifest)?;
            Err(e)
        }
    }
}

/// Build a run from a directory of `<id>.<ext>` images produced elsewhere.
/// Images are copied into the run directory.
pub fn ingest_directory(source: &Path, spec: &RunSpec) -> Result<RunManifest> {
    let started = Instant::now();
    let entries = fs::read_dir(source).map_err(|e| Error::io(source, e))?;
    // (id, file name in source, normalized file name)
    let mut found: Vec<(String, PathBuf, PathBuf)> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(source, e))?;
        let path = entry.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        let Some(ext) = ext.filter(|e| INGEST_EXTENSIONS.contains(&e.as_str())) else {
            continue;
        };
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        found.push((
            stem.to_string(),
            PathBuf::from(entry.file_name()),
            PathBuf::from(format!("{stem}.{ext}")),
        ));
    }
    found.sort();
    let key = spec.key.to_string();
    let invalid = |m: String| Error::Validation(format!("ingest for {key}: {m}"));

    // Validate against the source before touching the run directory.
    let in_place = RunSpec {
        output_dir: source.to_path_buf(),
        ..spec.clone()
    };
    let originals = found.iter().map(|(id, f, _)| (id.clone(), f.clone())).collect();
    build_entries(&in_place, originals, invalid)?;

    let images_dir = spec.output_dir.join(IMAGES_DIR);
    if images_dir.exists() {
        fs::remove_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;
    }
    fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;
    let mut copied = Vec::with_capacity(found.len());
    for (id, original, normalized) in &found {
        let dest = images_dir.join(normalized);
        fs::copy(source.join(original), &dest).map_err(|e| Error::io(&dest, e))?;
        copied.push((id.clone(), Path::new(IMAGES_DIR).join(normalized)));
    }
    let images = build_entries(spec, copied, invalid)?;
    let mut manifest = manifest_for(spec, spec_fingerprint(spec)?, RunSource::Ingest);
    manifest.images = images;
    manifest.status = RunStatus::Complete;
    manifest.wall_time_secs = started.elapsed().as_secs_f64();
    write_json_atomic(&spec.output_dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}
