//! On-disk feature store: a directory holding `manifest.json` and `data.bin`
//! (`rows × cols` little-endian `f32`, row-major, no header).
//!
//! Probability matrices use the same container with `"kind": "probabilities"`.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FeatureMatrix, GaussianStats, ProbabilityMatrix, StatsAccumulator};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATA_FILE: &str = "data.bin";
const BATCH_ROWS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StoreKind {
    Features,
    Probabilities,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreManifest {
    pub schema_version: u32,
    pub dtype: String,
    pub rows: usize,
    pub cols: usize,
    pub order: String,
    pub ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<StoreKind>,
}

#[derive(Debug)]
pub struct FeatureStore {
    dir: PathBuf,
    manifest: StoreManifest,
    index: HashMap<String, usize>,
}

impl FeatureStore {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let manifest_path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: StoreManifest =
            serde_json::from_str(&text).map_err(|e| Error::parse(&manifest_path, e))?;
        if manifest.schema_version != 1 {
            return Err(Error::parse(
                &manifest_path,
                format!("unsupported schema_version {}", manifest.schema_version),
            ));
        }
        if manifest.dtype != "f32le" || manifest.order != "row-major" {
            return Err(Error::parse(
                &manifest_path,
                format!("unsupported layout {}/{}", manifest.dtype, manifest.order),
            ));
        }
        if manifest.ids.len() != manifest.rows {
            return Err(Error::parse(
                &manifest_path,
                format!("{} ids for {} rows", manifest.ids.len(), manifest.rows),
            ));
        }
        let data_path = dir.join(DATA_FILE);
        let len = fs::metadata(&data_path)
            .map_err(|e| Error::io(&data_path, e))?
            .len();
        let expected = (manifest.rows * manifest.cols * 4) as u64;
        if len != expected {
            return Err(Error::parse(
                &data_path,
                format!("{len} bytes, expected {expected}"),
            ));
        }
        let mut index = HashMap::with_capacity(manifest.rows);
        for (i, id) in manifest.ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::parse(&manifest_path, format!("duplicate id `{id}`")));
            }
        }
        Ok(Self {
            dir,
            manifest,
            index,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &StoreManifest {
        &self.manifest
    }

    pub fn rows(&self) -> usize {
        self.manifest.rows
    }

    pub fn cols(&self) -> usize {
        self.manifest.cols
    }

    pub fn kind(&self) -> StoreKind {
        self.manifest.kind.unwrap_or(StoreKind::Features)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Ids not present in the store, in the order given.
    pub fn missing<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> Vec<String> {
        ids.into_iter()
            .filter(|id| !self.index.contains_key(*id))
            .map(str::to_owned)
            .collect()
    }

    fn open_data(&self) -> Result<BufReader<File>> {
        let path = self.dir.join(DATA_FILE);
        Ok(BufReader::new(
            File::open(&path).map_err(|e| Error::io(&path, e))?,
        ))
    }

    fn read_range(&self, reader: &mut BufReader<File>, start: usize, count: usize) -> Result<Vec<f64>> {
        let cols = self.cols();
        let mut buf = vec![0u8; count * cols * 4];
        let path = self.dir.join(DATA_FILE);
        reader
            .seek(SeekFrom::Start((start * cols * 4) as u64))
            .map_err(|e| Error::io(&path, e))?;
        reader
            .read_exact(&mut buf)
            .map_err(|e| Error::io(&path, e))?;
        Ok(buf
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect())
    }

    /// Rows for `ids`, in that order. Fails listing every uncovered id.
    pub fn read_ids(&self, ids: &[String]) -> Result<FeatureMatrix> {
        let missing = self.missing(ids.iter().map(String::as_str));
        if !missing.is_empty() {
            return Err(Error::Coverage { missing });
        }
        let mut reader = self.open_data()?;
        let mut data = Vec::with_capacity(ids.len() * self.cols());
        for id in ids {
            data.extend(self.read_range(&mut reader, self.index[id], 1)?);
        }
        FeatureMatrix::new(ids.len(), self.cols(), data, ids.to_vec())
    }

    pub fn read_all(&self) -> Result<FeatureMatrix> {
        let mut reader = self.open_data()?;
        let data = self.read_range(&mut reader, 0, self.rows())?;
        FeatureMatrix::new(self.rows(), self.cols(), data, self.manifest.ids.clone())
    }

    /// Probability rows for `ids`. Rows are renormalized to absorb `f32`
    /// storage error; rows off by more than 1e-3 are rejected.
    pub fn read_probabilities(&self, ids: &[String]) -> Result<ProbabilityMatrix> {
        let m = self.read_ids(ids)?;
        let (rows, cols, mut data, _) = m.into_parts();
        for (i, row) in data.chunks_exact_mut(cols).enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-3 {
                return Err(Error::InvalidInput(format!(
                    "probability row `{}` sums to {sum}",
                    ids[i]
                )));
            }
            row.iter_mut().for_each(|p| *p = (*p / sum).clamp(0.0, 1.0));
        }
        ProbabilityMatrix::new(rows, cols, data)
    }

    /// Gaussian statistics over every row, streamed in fixed-size batches
    /// that are accumulated in parallel and merged in batch order.
    pub fn stats(&self) -> Result<GaussianStats> {
        if self.rows() < 2 {
            return Err(Error::InsufficientSamples {
                needed: 2,
                got: self.rows(),
            });
        }
        let batches: Vec<(usize, usize)> = (0..self.rows())
            .step_by(BATCH_ROWS)
            .map(|s| (s, BATCH_ROWS.min(self.rows() - s)))
            .collect();
        let accs = batches
            .par_iter()
            .map(|&(start, count)| {
                let mut reader = self.open_data()?;
                let data = self.read_range(&mut reader, start, count)?;
                let mut acc = StatsAccumulator::new(self.cols());
                for row in data.chunks_exact(self.cols()) {
                    acc.push(row)?;
                }
                Ok(acc)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut total = StatsAccumulator::new(self.cols());
        for acc in &accs {
            total.merge(acc)?;
        }
        total.finish()
    }
}

/// Incremental writer; call [`StoreWriter::finish`] to emit the manifest.
pub struct StoreWriter {
    dir: PathBuf,
    cols: usize,
    kind: Option<StoreKind>,
    ids: Vec<String>,
    data: BufWriter<File>,
}

impl StoreWriter {
    pub fn create(dir: impl AsRef<Path>, cols: usize, kind: StoreKind) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let path = dir.join(DATA_FILE);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            dir,
            cols,
            kind: (kind == StoreKind::Probabilities).then_some(kind),
            ids: Vec::new(),
            data: BufWriter::new(file),
        })
    }

    pub fn push(&mut self, id: impl Into<String>, row: &[f64]) -> Result<()> {
        if row.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "row of length {} for a {}-column store",
                row.len(),
                self.cols
            )));
        }
        let path = self.dir.join(DATA_FILE);
        for v in row {
            self.data
                .write_all(&(*v as f32).to_le_bytes())
                .map_err(|e| Error::io(&path, e))?;
        }
        self.ids.push(id.into());
        Ok(())
    }

    pub fn finish(mut self) -> Result<StoreManifest> {
        let data_path = self.dir.join(DATA_FILE);
        self.data.flush().map_err(|e| Error::io(&data_path, e))?;
        let manifest = StoreManifest {
            schema_version: 1,
            dtype: "f32le".into(),
            rows: self.ids.len(),
            cols: self.cols,
            order: "row-major".into(),
            ids: self.ids,
            kind: self.kind,
        };
        let path = self.dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }
}

pub fn write_features(dir: impl AsRef<Path>, m: &FeatureMatrix) -> Result<StoreManifest> {
    let mut w = StoreWriter::create(dir, m.cols(), StoreKind::Features)?;
    for (id, row) in m.ids().iter().zip(m.iter_rows()) {
        w.push(id.clone(), row)?;
    }
    w.finish()
}

pub fn write_probabilities(
    dir: impl AsRef<Path>,
    ids: &[String],
    p: &ProbabilityMatrix,
) -> Result<StoreManifest> {
    if ids.len() != p.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} ids for {} rows",
            ids.len(),
            p.rows()
        )));
    }
    let mut w = StoreWriter::create(dir, p.classes(), StoreKind::Probabilities)?;
    for (i, id) in ids.iter().enumerate() {
        w.push(id.clone(), p.row(i))?;
    }
    w.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::accumulate_stats;

    #[test]
    fn data_file_is_raw_little_endian_f32() {
        let dir = tempfile::tempdir().unwrap();
        let m = FeatureMatrix::new(
            2,
            2,
            vec![1.0, -2.0, 0.5, 3.25],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        write_features(dir.path(), &m).unwrap();
        let bytes = fs::read(dir.path().join(DATA_FILE)).unwrap();
        let mut expected = Vec::new();
        for v in [1.0f32, -2.0, 0.5, 3.25] {
            expected.extend_from_slice(&v.to_le_bytes());
        }
        assert_eq!(bytes, expected);

        let manifest: serde_json::Value =
            serde_json::from_slice(&fs::read(dir.path().join(MANIFEST_FILE)).unwrap()).unwrap();
        assert_eq!(manifest["schema_version"], 1);
        assert_eq!(manifest["dtype"], "f32le");
        assert_eq!(manifest["order"], "row-major");
        assert_eq!(manifest["rows"], 2);
        assert_eq!(manifest["cols"], 2);
        assert!(manifest.get("kind").is_none());

        let store = FeatureStore::open(dir.path()).unwrap();
        assert_eq!(store.read_all().unwrap(), m);
        let picked = store.read_ids(&["b".into()]).unwrap();
        assert_eq!(picked.data(), &[0.5, 3.25]);
    }

    #[test]
    fn coverage_gap_lists_ids() {
        let dir = tempfile::tempdir().unwrap();
        let m = FeatureMatrix::from_row_vecs(&[vec![1.0], vec![2.0]]).unwrap();
        write_features(dir.path(), &m).unwrap();
        let store = FeatureStore::open(dir.path()).unwrap();
        match store.read_ids(&["0".into(), "x".into(), "y".into()]) {
            Err(Error::Coverage { missing }) => assert_eq!(missing, vec!["x", "y"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn probabilities_roundtrip_with_kind() {
        let dir = tempfile::tempdir().unwrap();
        let p = ProbabilityMatrix::from_row_vecs(&[vec![0.1, 0.9], vec![0.7, 0.3]]).unwrap();
        let ids = vec!["u".to_string(), "v".to_string()];
        write_probabilities(dir.path(), &ids, &p).unwrap();
        let store = FeatureStore::open(dir.path()).unwrap();
        assert_eq!(store.kind(), StoreKind::Probabilities);
        let back = store.read_probabilities(&ids).unwrap();
        for (a, b) in back.data().iter().zip(p.data()) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn streamed_stats_match_in_memory() {
        let dir = tempfile::tempdir().unwrap();
        let rows: Vec<Vec<f64>> = (0..9000)
            .map(|i| {
                let x = (i as f64 * 0.37).sin();
                vec![x, (i % 17) as f64 * 0.25, x * 0.5 - 1.0]
            })
            .collect();
        let m = FeatureMatrix::from_row_vecs(&rows).unwrap();
        write_features(dir.path(), &m).unwrap();
        let store = FeatureStore::open(dir.path()).unwrap();
        let streamed = store.stats().unwrap();
        let direct = accumulate_stats(&store.read_all().unwrap()).unwrap();
        for (a, b) in streamed.cov().iter().zip(direct.cov()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn truncated_data_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let m = FeatureMatrix::from_row_vecs(&[vec![1.0], vec![2.0]]).unwrap();
        write_features(dir.path(), &m).unwrap();
        fs::write(dir.path().join(DATA_FILE), [0u8; 4]).unwrap();
        assert!(FeatureStore::open(dir.path()).is_err());
    }
}
