//! Adapter job/result files.
//!
//! The harness writes `job.json` into the run directory and invokes the
//! adapter with the job path as its last argument. The adapter writes one
//! image per sample into `output_dir`, then `result.json` next to `job.json`.
//! Image `file` entries are relative to `output_dir`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::key::Steps;

pub const PROTOCOL_VERSION: u32 = 1;
pub const JOB_FILE: &str = "job.json";
pub const RESULT_FILE: &str = "result.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobSample {
    pub id: String,
    pub class_id: u32,
    pub class_name: String,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobFile {
    pub schema_version: u32,
    pub model_id: String,
    /// `None` for models whose guidance is fixed in the weights.
    pub cfg: Option<f64>,
    pub steps: Steps,
    pub seed: u64,
    pub samples: Vec<JobSample>,
    pub output_dir: PathBuf,
}

impl JobFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let job: Self = read_json(path.as_ref())?;
        if job.schema_version != PROTOCOL_VERSION {
            return Err(Error::parse(
                path.as_ref(),
                format!("unsupported job schema_version {}", job.schema_version),
            ));
        }
        Ok(job)
    }

    /// Where the adapter must put `result.json` for a job at `job_path`.
    pub fn result_path(job_path: &Path) -> PathBuf {
        job_path
            .parent()
            .map(|p| p.join(RESULT_FILE))
            .unwrap_or_else(|| PathBuf::from(RESULT_FILE))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResultStatus {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultImage {
    pub id: String,
    pub file: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub status: ResultStatus,
    pub images: Vec<ResultImage>,
    /// Per-sample model evaluations, in `images` order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nfe: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl ResultFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path.as_ref())
    }
}

/// Sample ids double as file stems, so they are restricted to a safe set.
pub fn check_sample_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id != "."
        && id != ".."
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'));
    if ok {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "sample id `{id}` must be nonempty and use only [A-Za-z0-9._-]"
        )))
    }
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let at = e.path().to_string();
        Error::parse(path, format!("at `{at}`: {}", e.inner()))
    })
}

/// Pretty JSON written to a temporary sibling, then renamed into place.
pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_vec_pretty(value)?;
    text.push(b'\n');
    write_atomic(path, &text)
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("{} has no file name", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".{}.tmp", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn job_json_shape() {
        let job = JobFile {
            schema_version: 1,
            model_id: "soflow".into(),
            cfg: None,
            steps: Steps::Dynamic,
            seed: 42,
            samples: vec![JobSample {
                id: "s0".into(),
                class_id: 1,
                class_name: "goldfish".into(),
                prompt: "a photo of a goldfish".into(),
            }],
            output_dir: "images".into(),
        };
        let v = serde_json::to_value(&job).unwrap();
        assert!(v["cfg"].is_null());
        assert_eq!(v["steps"], "dynamic");
        let back: JobFile = serde_json::from_value(v).unwrap();
        assert_eq!(back, job);
    }

    #[test]
    fn result_without_nfe() {
        let r: ResultFile =
            serde_json::from_str(r#"{"status":"ok","images":[{"id":"a","file":"a.png"}]}"#).unwrap();
        assert_eq!(r.nfe, None);
        assert_eq!(r.status, ResultStatus::Ok);
    }

    #[test]
    fn sample_ids() {
        check_sample_id("val_00001.x-y").unwrap();
        for bad in ["", "..", "a/b", "a b"] {
            assert!(check_sample_id(bad).is_err());
        }
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        write_json_atomic(&p, &1).unwrap();
        write_json_atomic(&p, &2).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "2\n");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
