//! Image download, review exclusions and the final dataset manifest.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::candidates::{CandidateRecord, ClassManifest};
use super::synset::{is_valid_wnid, Synset};
use crate::error::{Error, Result};
use crate::harness::dataset::{Dataset, DatasetFile, Example};
use crate::harness::protocol::{write_atomic, write_json_atomic};

pub const DATASET_MANIFEST_FILE: &str = "dataset_manifest.json";
pub const DOWNLOAD_REPORT_FILE: &str = "download_report.json";
pub const IMAGES_DIR: &str = "images";
const IMAGE_EXTENSIONS: [&str; 6] = ["jpg", "jpeg", "png", "webp", "gif", "bmp"];

/// Review outcome codes, one per removal criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReasonCode {
    SynsetMismatch,
    IlsvrcMismatch,
    TextDominant,
    Insensitive,
    Nsfw,
}

impl ReasonCode {
    pub const ALL: [ReasonCode; 5] = [
        ReasonCode::SynsetMismatch,
        ReasonCode::IlsvrcMismatch,
        ReasonCode::TextDominant,
        ReasonCode::Insensitive,
        ReasonCode::Nsfw,
    ];

    pub fn code(self) -> &'static str {
        match self {
            ReasonCode::SynsetMismatch => "synset-mismatch",
            ReasonCode::IlsvrcMismatch => "ilsvrc-mismatch",
            ReasonCode::TextDominant => "text-dominant",
            ReasonCode::Insensitive => "insensitive",
            ReasonCode::Nsfw => "nsfw",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ReasonCode::SynsetMismatch => "Synset ID mismatch",
            ReasonCode::IlsvrcMismatch => "ILSVRC-2012 ID mismatch",
            ReasonCode::TextDominant => "Text-dominant imagery",
            ReasonCode::Insensitive => "Insensitive or joke content",
            ReasonCode::Nsfw => "NSFW content",
        }
    }
}

impl fmt::Display for ReasonCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for ReasonCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase().replace('_', "-");
        ReasonCode::ALL
            .into_iter()
            .find(|r| r.code() == t)
            .ok_or_else(|| Error::Validation(format!("unknown reason code `{s}`")))
    }
}

/// One row of `exclusions.csv`. An id that is a wnid removes the whole class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exclusion {
    pub image_id: String,
    pub reason: ReasonCode,
}

#[derive(Deserialize)]
struct ExclusionRow {
    image_id: String,
    reason_code: String,
}

pub fn load_exclusions(path: &Path) -> Result<Vec<Exclusion>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path, e))?;
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<ExclusionRow>().enumerate() {
        let row = row.map_err(|e| Error::parse(path, format!("line {}: {e}", i + 2)))?;
        let reason = row
            .reason_code
            .parse()
            .map_err(|e| Error::parse(path, format!("line {}: {e}", i + 2)))?;
        out.push(Exclusion {
            image_id: row.image_id,
            reason,
        });
    }
    Ok(out)
}

/// First 16 hex digits of the url's SHA-256.
pub fn image_id(url: &str) -> String {
    let h = Sha256::digest(url.as_bytes());
    hex::encode(&h[..8])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DownloadOptions {
    pub workers: usize,
    pub attempts: u32,
    pub backoff: Duration,
    pub per_host_interval: Duration,
    pub timeout: Duration,
    pub max_bytes: u64,
}

impl Default for DownloadOptions {
    fn default() -> Self {
        Self {
            workers: 16,
            attempts: 3,
            backoff: Duration::from_millis(500),
            per_host_interval: Duration::from_millis(100),
            timeout: Duration::from_secs(30),
            max_bytes: 32 << 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetImage {
    pub id: String,
    pub url: String,
    /// Relative to the dataset root.
    pub file: String,
    pub clip_sim: f64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetClass {
    pub wnid: String,
    pub class_index: u32,
    pub name: String,
    pub images: Vec<DatasetImage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub classes: Vec<DatasetClass>,
    pub counts: BTreeMap<String, usize>,
    pub total: usize,
    /// SHA-256 over the canonical JSON of `classes`.
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeadUrl {
    pub id: String,
    pub wnid: String,
    pub url: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DownloadReport {
    pub schema_version: u32,
    pub requested: usize,
    pub fetched: usize,
    pub cached: usize,
    pub dead: Vec<DeadUrl>,
    /// Excluded images per criterion display name.
    pub excluded_images: BTreeMap<String, usize>,
    /// Excluded classes per criterion display name.
    pub excluded_classes: BTreeMap<String, Vec<String>>,
    /// Urls that landed in more than one class; dropped as ambiguous.
    pub cross_class_duplicates: Vec<String>,
    /// Classes left with no live image.
    pub dropped_classes: Vec<String>,
    pub unknown_exclusion_ids: Vec<String>,
}

/// Spaces requests to the same host by at least `interval`.
struct HostGate {
    interval: Duration,
    next: Mutex<HashMap<String, Instant>>,
}

impl HostGate {
    fn wait(&self, url: &str) {
        if self.interval.is_zero() {
            return;
        }
        let host = url
            .split("://")
            .nth(1)
            .and_then(|r| r.split('/').next())
            .unwrap_or("")
            .to_string();
        let slot = {
            let mut next = self.next.lock().unwrap_or_else(|e| e.into_inner());
            let now = Instant::now();
            let slot = next.get(&host).map_or(now, |t| (*t).max(now));
            next.insert(host, slot + self.interval);
            slot
        };
        let now = Instant::now();
        if slot > now {
            std::thread::sleep(slot - now);
        }
    }
}

enum Fetch {
    Ok(Vec<u8>, Option<String>),
    Retry(String),
    Dead(String),
}

fn fetch_once(agent: &ureq::Agent, url: &str, max_bytes: u64) -> Fetch {
    let mut resp = match agent.get(url).call() {
        Ok(r) => r,
        Err(e) => return Fetch::Retry(e.to_string()),
    };
    let status = resp.status().as_u16();
    if status == 429 || status >= 500 {
        return Fetch::Retry(format!("HTTP {status}"));
    }
    if status >= 400 {
        return Fetch::Dead(format!("HTTP {status}"));
    }
    let ctype = resp
        .headers()
        .get("content-type")
        .and_then(|v| v.to_str().ok())
        .map(str::to_string);
    let mut body = Vec::new();
    let read = resp
        .body_mut()
        .as_reader()
        .take(max_bytes + 1)
        .read_to_end(&mut body);
    match read {
        Err(e) => Fetch::Retry(e.to_string()),
        Ok(_) if body.len() as u64 > max_bytes => Fetch::Dead("body too large".into()),
        Ok(0) => Fetch::Dead("empty body".into()),
        Ok(_) => Fetch::Ok(body, ctype),
    }
}

fn extension(url: &str, content_type: Option<&str>) -> String {
    let path = url.split(['?', '#']).next().unwrap_or(url);
    let last = path.rsplit('/').next().unwrap_or("");
    if let Some((_, ext)) = last.rsplit_once('.') {
        let ext = ext.to_ascii_lowercase();
        if IMAGE_EXTENSIONS.contains(&ext.as_str()) {
            return ext;
        }
    }
    if let Some(sub) = content_type.and_then(|c| c.split(';').next()).and_then(|c| c.trim().strip_prefix("image/")) {
        let sub = sub.to_ascii_lowercase();
        if IMAGE_EXTENSIONS.contains(&sub.as_str()) {
            return sub;
        }
    }
    "jpg".into()
}

/// An existing `<id>.<ext>` file in the class directory, if any.
fn existing(dir: &Path, id: &str) -> Option<PathBuf> {
    IMAGE_EXTENSIONS
        .iter()
        .map(|e| dir.join(format!("{id}.{e}")))
        .find(|p| p.is_file())
}

struct Job<'a> {
    id: String,
    class_dir: PathBuf,
    record: &'a CandidateRecord,
}

enum JobResult {
    Fetched(PathBuf),
    Cached(PathBuf),
    Dead(String),
}

fn run_job(job: &Job<'_>, agent: &ureq::Agent, gate: &HostGate, opts: &DownloadOptions) -> Result<JobResult> {
    if let Some(p) = existing(&job.class_dir, &job.id) {
        return Ok(JobResult::Cached(p));
    }
    let mut last = String::new();
    for attempt in 0..opts.attempts.max(1) {
        if attempt > 0 {
            std::thread::sleep(opts.backoff * 2u32.pow(attempt - 1));
        }
        gate.wait(&job.record.url);
        match fetch_once(agent, &job.record.url, opts.max_bytes) {
            Fetch::Ok(bytes, ctype) => {
                let ext = extension(&job.record.url, ctype.as_deref());
                fs::create_dir_all(&job.class_dir).map_err(|e| Error::io(&job.class_dir, e))?;
                let path = job.class_dir.join(format!("{}.{ext}", job.id));
                write_atomic(&path, &bytes)?;
                return Ok(JobResult::Fetched(path));
            }
            Fetch::Dead(e) => return Ok(JobResult::Dead(e)),
            Fetch::Retry(e) => last = e,
        }
    }
    Ok(JobResult::Dead(format!("{} attempts: {last}", opts.attempts.max(1))))
}

fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn rel(root: &Path, p: &Path) -> String {
    p.strip_prefix(root)
        .unwrap_or(p)
        .components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

/// Downloads every non-excluded candidate into
/// `<root>/images/<wnid>/<id>.<ext>` and writes `dataset_manifest.json`,
/// `download_report.json` and a `dataset.json` the harness can load.
/// Files already on disk are reused.
pub fn download_and_finalize(
    classes: &[ClassManifest],
    synsets: &[Synset],
    exclusions: &[Exclusion],
    root: &Path,
    dataset_id: &str,
    opts: &DownloadOptions,
) -> Result<(DatasetManifest, DownloadReport)> {
    let by_wnid: HashMap<&str, &Synset> = synsets.iter().map(|s| (s.wnid.as_str(), s)).collect();
    let mut report = DownloadReport {
        schema_version: 1,
        ..Default::default()
    };

    let mut class_excl: BTreeMap<&str, ReasonCode> = BTreeMap::new();
    let mut image_excl: HashMap<&str, ReasonCode> = HashMap::new();
    for e in exclusions {
        if is_valid_wnid(&e.image_id) {
            class_excl.insert(&e.image_id, e.reason);
        } else {
            image_excl.insert(&e.image_id, e.reason);
        }
    }

    // urls claimed by more than one class are ambiguous
    let mut url_classes: HashMap<&str, HashSet<&str>> = HashMap::new();
    for c in classes {
        for r in &c.candidates {
            url_classes.entry(&r.url).or_default().insert(&c.wnid);
        }
    }
    let mut dup: Vec<String> = url_classes
        .iter()
        .filter(|(_, w)| w.len() > 1)
        .map(|(u, _)| u.to_string())
        .collect();
    dup.sort();
    let dup_set: HashSet<&str> = dup.iter().map(String::as_str).collect();
    report.cross_class_duplicates = dup.clone();

    let images_root = root.join(IMAGES_DIR);
    let mut seen_ids = HashSet::new();
    let mut jobs: Vec<(usize, Job<'_>)> = Vec::new();
    let mut kept_classes = Vec::new();
    for c in classes {
        let syn = by_wnid.get(c.wnid.as_str()).ok_or_else(|| {
            Error::Validation(format!("class {} is not in the synset list", c.wnid))
        })?;
        if let Some(reason) = class_excl.get(c.wnid.as_str()) {
            report
                .excluded_classes
                .entry(reason.display_name().to_string())
                .or_default()
                .push(c.wnid.clone());
            continue;
        }
        let ci = kept_classes.len();
        kept_classes.push(*syn);
        for r in &c.candidates {
            if dup_set.contains(r.url.as_str()) {
                continue;
            }
            let id = image_id(&r.url);
            seen_ids.insert(id.clone());
            if let Some(reason) = image_excl.get(id.as_str()) {
                *report.excluded_images.entry(reason.display_name().to_string()).or_default() += 1;
                continue;
            }
            jobs.push((
                ci,
                Job {
                    id,
                    class_dir: images_root.join(&c.wnid),
                    record: r,
                },
            ));
        }
    }
    let mut unknown: Vec<String> = image_excl
        .keys()
        .filter(|k| !seen_ids.contains(**k))
        .map(|k| k.to_string())
        .collect();
    unknown.sort();
    report.unknown_exclusion_ids = unknown;
    report.requested = jobs.len();

    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(opts.timeout))
        .http_status_as_error(false)
        .build()
        .into();
    let gate = HostGate {
        interval: opts.per_host_interval,
        next: Mutex::new(HashMap::new()),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("worker pool: {e}")))?;
    let results: Vec<Result<JobResult>> =
        pool.install(|| jobs.par_iter().map(|(_, j)| run_job(j, &agent, &gate, opts)).collect());

    // assembled in candidate order, single-threaded
    let mut out: Vec<DatasetClass> = kept_classes
        .iter()
        .map(|s| DatasetClass {
            wnid: s.wnid.clone(),
            class_index: s.class_index,
            name: s.name.clone(),
            images: Vec::new(),
        })
        .collect();
    for ((ci, job), res) in jobs.iter().zip(results) {
        let path = match res? {
            JobResult::Fetched(p) => {
                report.fetched += 1;
                p
            }
            JobResult::Cached(p) => {
                report.cached += 1;
                p
            }
            JobResult::Dead(error) => {
                tracing::info!(url = %job.record.url, %error, "dead url");
                report.dead.push(DeadUrl {
                    id: job.id.clone(),
                    wnid: out[*ci].wnid.clone(),
                    url: job.record.url.clone(),
                    error,
                });
                continue;
            }
        };
        out[*ci].images.push(DatasetImage {
            id: job.id.clone(),
            url: job.record.url.clone(),
            file: rel(root, &path),
            clip_sim: job.record.clip_sim,
            sha256: file_sha256(&path)?,
        });
    }
    out.retain(|c| {
        if c.images.is_empty() {
            tracing::warn!(wnid = %c.wnid, "no live images; class dropped");
            report.dropped_classes.push(c.wnid.clone());
        }
        !c.images.is_empty()
    });
    out.sort_by(|a, b| a.wnid.cmp(&b.wnid));

    let digest = hex::encode(Sha256::digest(serde_json::to_vec(&out)?));
    let manifest = DatasetManifest {
        schema_version: 1,
        counts: out.iter().map(|c| (c.wnid.clone(), c.images.len())).collect(),
        total: out.iter().map(|c| c.images.len()).sum(),
        classes: out,
        digest,
    };
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    write_json_atomic(&root.join(DATASET_MANIFEST_FILE), &manifest)?;
    write_json_atomic(&root.join(DOWNLOAD_REPORT_FILE), &report)?;
    if manifest.total > 0 {
        let examples = manifest
            .classes
            .iter()
            .flat_map(|c| {
                c.images.iter().map(|i| Example {
                    id: i.id.clone(),
                    class_id: c.class_index,
                    class_name: c.name.clone(),
                })
            })
            .collect();
        Dataset::create(
            root,
            DatasetFile {
                schema_version: 1,
                id: dataset_id.to_string(),
                examples,
                features: BTreeMap::new(),
            },
        )?;
    }
    Ok((manifest, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reason_codes() {
        assert_eq!("NSFW".parse::<ReasonCode>().unwrap(), ReasonCode::Nsfw);
        assert_eq!("text_dominant".parse::<ReasonCode>().unwrap(), ReasonCode::TextDominant);
        assert!("blurry".parse::<ReasonCode>().is_err());
        assert_eq!(ReasonCode::Nsfw.display_name(), "NSFW content");
    }

    #[test]
    fn ids_and_extensions() {
        assert_eq!(image_id("http://a/b.jpg").len(), 16);
        assert_eq!(image_id("http://a/b.jpg"), image_id("http://a/b.jpg"));
        assert_ne!(image_id("http://a/b.jpg"), image_id("http://a/c.jpg"));
        assert_eq!(extension("http://h/x.PNG?w=1", None), "png");
        assert_eq!(extension("http://h/x", Some("image/webp; q=1")), "webp");
        assert_eq!(extension("http://h/x.php", Some("text/html")), "jpg");
    }

    #[test]
    fn exclusion_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("exclusions.csv");
        fs::write(&p, "image_id,reason_code\nabc,nsfw\nn01440764, synset-mismatch\n").unwrap();
        let e = load_exclusions(&p).unwrap();
        assert_eq!(e[1], Exclusion { image_id: "n01440764".into(), reason: ReasonCode::SynsetMismatch });
        fs::write(&p, "image_id,reason_code\nabc,blurry\n").unwrap();
        let err = load_exclusions(&p).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }
}
