use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::backend::{Backend, Backends, ImageRef, RunImages};
use super::dataset::Dataset;
use super::plan::RUNS_DIR;
use super::protocol::{read_json, write_json_atomic};
use super::run::{NfeStats, RunManifest};
use crate::error::{Error, Result};
use crate::key::RunKey;
use crate::metrics::store::{FeatureStore, DATA_FILE, MANIFEST_FILE as STORE_MANIFEST};
use crate::metrics::{
    accumulate_stats, clip_score, frechet_distance, inception_score, GaussianStats, MetricReport,
    DEFAULT_SPLITS,
};

pub const REPORT_FILE: &str = "report.json";
pub const AGGREGATE_FILE: &str = "reports.json";
pub const CACHE_DIR: &str = "cache/reference_stats";

/// Persisted evaluation of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub key: RunKey,
    pub family: String,
    pub metrics: MetricReport,
    pub n_images: usize,
    pub feature_backend: String,
    pub reference_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nfe_stats: Option<NfeStats>,
}

pub fn run_images(manifest: &RunManifest, run_dir: &Path) -> RunImages {
    RunImages {
        slug: manifest.key.slug(),
        work_dir: run_dir.to_path_buf(),
        images: manifest
            .images
            .iter()
            .map(|e| ImageRef {
                id: e.id.clone(),
                file: run_dir.join(&e.path),
                prompt: e.prompt.clone(),
                class_id: e.class_id,
            })
            .collect(),
    }
}

/// The four raw metrics of a completed run.
pub fn evaluate_run(
    manifest: &RunManifest,
    run_dir: &Path,
    reference: &GaussianStats,
    backends: &Backends,
    pick_logit_scale: f64,
) -> Result<MetricReport> {
    if !manifest.is_complete() {
        return Err(Error::IncompleteRun {
            run_key: manifest.key.to_string(),
            message: "manifest is not complete".into(),
        });
    }
    let run = run_images(manifest, run_dir);

    let features = backends.feature.features(&run)?;
    if features.cols() != reference.dim() {
        return Err(Error::DimensionMismatch(format!(
            "generated features have {} dims, reference stats {}",
            features.cols(),
            reference.dim()
        )));
    }
    let fid = frechet_distance(&accumulate_stats(&features)?, reference)?;

    let probs = backends.classifier.probabilities(&run)?;
    let (is_mean, is_std) = inception_score(&probs, DEFAULT_SPLITS)?;

    let (img, txt) = backends.alignment.alignment(&run)?;
    let clip = clip_score(&img, &txt)?;

    let pick = backends.preference.preference(&run, pick_logit_scale)?;
    Ok(MetricReport::new(fid, is_mean, is_std, clip, pick))
}

/// Evaluate and write `report.json` into the run directory.
pub fn evaluate_and_persist(
    run_dir: &Path,
    reference: &GaussianStats,
    backends: &Backends,
    pick_logit_scale: f64,
) -> Result<RunReport> {
    let manifest = RunManifest::load(run_dir)?;
    let metrics = evaluate_run(&manifest, run_dir, reference, backends, pick_logit_scale)?;
    let report = RunReport {
        schema_version: 1,
        key: manifest.key.clone(),
        family: manifest.family.clone(),
        metrics,
        n_images: manifest.images.len(),
        feature_backend: backends.feature.name().to_string(),
        reference_count: reference.count(),
        nfe_stats: manifest.nfe_stats,
    };
    write_json_atomic(&run_dir.join(REPORT_FILE), &report)?;
    Ok(report)
}

#[derive(Serialize, Deserialize)]
struct CachedStats {
    fingerprint: String,
    stats: GaussianStats,
}

fn store_fingerprint(store: &FeatureStore) -> Result<String> {
    let manifest_path = store.dir().join(STORE_MANIFEST);
    let data_path = store.dir().join(DATA_FILE);
    let manifest = fs::read(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let len = fs::metadata(&data_path).map_err(|e| Error::io(&data_path, e))?.len();
    let mut h = Sha256::new();
    h.update(&manifest);
    h.update(len.to_le_bytes());
    Ok(hex::encode(h.finalize()))
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '-' })
        .collect()
}

/// Statistics of the full reference set, cached on disk under
/// `(dataset, backend, feature dim)`.
pub fn reference_stats(dataset: &Dataset, backend: &Backend, cache_dir: &Path) -> Result<GaussianStats> {
    let store = dataset.feature_store(backend.name())?;
    let fingerprint = store_fingerprint(&store)?;
    let path: PathBuf = cache_dir.join(format!(
        "{}__{}__d{}.json",
        sanitize(dataset.id()),
        sanitize(backend.name()),
        store.cols()
    ));
    if let Ok(text) = fs::read_to_string(&path) {
        if let Ok(c) = serde_json::from_str::<CachedStats>(&text) {
            if c.fingerprint == fingerprint {
                tracing::debug!(cache = %path.display(), "reference stats from cache");
                return Ok(c.stats);
            }
        }
    }
    let stats = store.stats()?;
    fs::create_dir_all(cache_dir).map_err(|e| Error::io(cache_dir, e))?;
    write_json_atomic(
        &path,
        &CachedStats {
            fingerprint,
            stats: stats.clone(),
        },
    )?;
    Ok(stats)
}

/// Every `report.json` under `<out>/runs`, ordered by run key.
pub fn collect_reports(out: &Path) -> Result<Vec<RunReport>> {
    let runs = out.join(RUNS_DIR);
    let mut reports = Vec::new();
    if !runs.is_dir() {
        return Ok(reports);
    }
    for entry in fs::read_dir(&runs).map_err(|e| Error::io(&runs, e))? {
        let p = entry.map_err(|e| Error::io(&runs, e))?.path().join(REPORT_FILE);
        if p.is_file() {
            reports.push(read_json::<RunReport>(&p)?);
        }
    }
    reports.sort_by(|a, b| a.key.cmp(&b.key));
    Ok(reports)
}

/// `<out>/reports.json`: run key → report.
pub fn write_aggregate(out: &Path, reports: &[RunReport]) -> Result<PathBuf> {
    let map: BTreeMap<String, &RunReport> = reports.iter().map(|r| (r.key.to_string(), r)).collect();
    let path = out.join(AGGREGATE_FILE);
    write_json_atomic(&path, &map)?;
    Ok(path)
}

pub fn load_aggregate(path: &Path) -> Result<Vec<RunReport>> {
    let map: BTreeMap<String, RunReport> = read_json(path)?;
    Ok(map.into_values().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::run::{ClassBalance, ImageEntry, RunSource, RunStatus};
    use crate::key::Steps;
    use crate::toyflow::codec::encode_png;
    use crate::toyflow::reference::write_reference;
    use crate::toyflow::ToyModel;

    fn toy_run(dir: &Path, points: &[([f64; 2], u32)]) -> RunManifest {
        let model = ToyModel::default_four();
        fs::create_dir_all(dir.join("images")).unwrap();
        let images = points
            .iter()
            .enumerate()
            .map(|(i, (p, c))| {
                let rel = PathBuf::from(format!("images/g{i}.png"));
                fs::write(dir.join(&rel), encode_png(*p).unwrap()).unwrap();
                ImageEntry {
                    id: format!("g{i}"),
                    path: rel,
                    class_id: *c,
                    prompt: format!("a photo of a {}", model.class(*c).unwrap().name),
                    sha256: String::new(),
                }
            })
            .collect();
        RunManifest {
            schema_version: 1,
            key: RunKey::new("toy", 1.0, Steps::Fixed(1), "toy4", 42),
            family: "toy".into(),
            status: RunStatus::Complete,
            source: RunSource::Ingest,
            spec_fingerprint: String::new(),
            images,
            nfe_stats: None,
            class_balance: ClassBalance { classes: 4, min_per_class: 1, max_per_class: 1, imbalanced: false },
            wall_time_secs: 0.0,
            message: None,
        }
    }

    #[test]
    fn toy_metrics_at_class_means() {
        let dir = tempfile::tempdir().unwrap();
        let model = ToyModel::default_four();
        let pts: Vec<([f64; 2], u32)> = (0..40).map(|i| (model.classes[i % 4].mean, (i % 4) as u32)).collect();
        let m = toy_run(dir.path(), &pts);
        let ds = write_reference(&dir.path().join("ref"), "toy4", &model, 50, 1).unwrap();
        let backends = Backends::toy(model);
        let reference = reference_stats(&ds, &backends.feature, &dir.path().join("cache")).unwrap();
        let r = evaluate_run(&m, dir.path(), &reference, &backends, 100.0).unwrap();
        // four balanced, nearly certain classes
        assert!((r.is_mean - 4.0).abs() < 1e-3, "{r:?}");
        assert!(r.clip_score > 99.0 && r.pick_score > 99.0);
        // per axis the spread is 9 (between classes) against 10 for the
        // reference, so FID is near 2(sqrt(10) - 3)^2 plus sampling noise
        let expect = 2.0 * (10f64.sqrt() - 3.0).powi(2);
        assert!(r.fid > 0.0 && (r.fid - expect).abs() < 0.1, "{}", r.fid);
    }

    #[test]
    fn order_of_images_does_not_matter() {
        let dir = tempfile::tempdir().unwrap();
        let model = ToyModel::default_four();
        let pts: Vec<([f64; 2], u32)> = (0..30)
            .map(|i| ([i as f64 * 0.37 - 3.0, (i * i % 7) as f64 - 3.0], (i % 4) as u32))
            .collect();
        let a = toy_run(&dir.path().join("a"), &pts);
        let mut rev = pts.clone();
        rev.reverse();
        let b = toy_run(&dir.path().join("b"), &rev);
        let ds = write_reference(&dir.path().join("ref"), "toy4", &model, 10, 1).unwrap();
        let backends = Backends::toy(model);
        let reference = reference_stats(&ds, &backends.feature, &dir.path().join("cache")).unwrap();
        let ra = evaluate_run(&a, &dir.path().join("a"), &reference, &backends, 100.0).unwrap();
        let rb = evaluate_run(&b, &dir.path().join("b"), &reference, &backends, 100.0).unwrap();
        assert!((ra.fid - rb.fid).abs() < 1e-8);
        assert!((ra.clip_score - rb.clip_score).abs() < 1e-8);
        assert!((ra.pick_score - rb.pick_score).abs() < 1e-8);
    }

    #[test]
    fn reference_cache_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let ds = write_reference(&dir.path().join("ref"), "toy4", &ToyModel::default_four(), 25, 3).unwrap();
        let b = Backends::toy(ToyModel::default_four()).feature;
        let cache = dir.path().join("cache");
        let first = reference_stats(&ds, &b, &cache).unwrap();
        let file = fs::read_dir(&cache).unwrap().next().unwrap().unwrap().path();
        assert!(file.file_name().unwrap().to_str().unwrap().ends_with("toy4__toy__d2.json"));
        let bytes = fs::read(&file).unwrap();
        let second = reference_stats(&ds, &b, &cache).unwrap();
        assert_eq!(first, second);
        assert_eq!(serde_json::to_vec(&first).unwrap(), serde_json::to_vec(&second).unwrap());
        assert_eq!(fs::read(&file).unwrap(), bytes);
        assert_eq!(first.count(), 100);
    }
}
