//! Text-embedding boundary used when shards carry no similarity column.

use std::fs;
use std::path::PathBuf;
use std::process::Command;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::protocol::{read_json, write_json_atomic};

pub const EMBED_BATCH: usize = 2048;

pub trait TextEmbedder: Send + Sync {
    fn name(&self) -> &str;
    /// One embedding per text, any length-consistent dimension.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>>;
}

/// Unit-normalizes in place; zero vectors stay zero.
pub fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    schema_version: u32,
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    embeddings: Vec<Vec<f64>>,
}

/// Runs `program args.. <request.json>`; the program writes
/// `response.json` next to the request with `{"embeddings": [[..], ..]}`.
pub struct ExternalEmbedder {
    pub program: String,
    pub args: Vec<String>,
    pub work_dir: PathBuf,
    counter: AtomicU64,
}

impl ExternalEmbedder {
    pub fn new(program: impl Into<String>, args: Vec<String>, work_dir: impl Into<PathBuf>) -> Self {
        Self {
            program: program.into(),
            args,
            work_dir: work_dir.into(),
            counter: AtomicU64::new(0),
        }
    }
}

impl TextEmbedder for ExternalEmbedder {
    fn name(&self) -> &str {
        &self.program
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        let dir = self.work_dir.join(format!("embed-{}-{n}", std::process::id()));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let req = dir.join("request.json");
        write_json_atomic(&req, &EmbedRequest { schema_version: 1, texts })?;
        let out = Command::new(&self.program)
            .args(&self.args)
            .arg(&req)
            .current_dir(&dir)
            .output()
            .map_err(|e| Error::io(&self.program, e))?;
        if !out.status.success() {
            let tail = String::from_utf8_lossy(&out.stderr);
            return Err(Error::InvalidInput(format!(
                "embedder `{}` exited with {}: {}",
                self.program,
                out.status,
                tail.trim()
            )));
        }
        let resp: EmbedResponse = read_json(&dir.join("response.json"))?;
        let _ = fs::remove_dir_all(&dir);
        if resp.embeddings.len() != texts.len() {
            return Err(Error::DimensionMismatch(format!(
                "embedder returned {} vectors for {} texts",
                resp.embeddings.len(),
                texts.len()
            )));
        }
        Ok(resp.embeddings)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_basics() {
        assert!((cosine(&[1.0, 0.0], &[2.0, 0.0]) - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 3.0]), 0.0);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
        let mut v = vec![3.0, 4.0];
        normalize(&mut v);
        assert_eq!(v, [0.6, 0.8]);
    }

    #[test]
    fn external_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        // emits [len(text), 1] per text using only the shell
        let script = r#"n=$(grep -o '"[^"]*"' "$1" | tail -n +3 | wc -l); printf '{"embeddings":[' > response.json; i=0; while [ $i -lt $n ]; do [ $i -gt 0 ] && printf ',' >> response.json; printf '[1,0]' >> response.json; i=$((i+1)); done; printf ']}' >> response.json"#;
        let e = ExternalEmbedder::new("sh", vec!["-c".into(), script.into(), "sh".into()], dir.path());
        let got = e.embed(&["a".into(), "b".into()]).unwrap();
        assert_eq!(got, vec![vec![1.0, 0.0], vec![1.0, 0.0]]);
        let bad = ExternalEmbedder::new("sh", vec!["-c".into(), "exit 3".into(), "sh".into()], dir.path());
        assert!(bad.embed(&["a".into()]).is_err());
    }
}
