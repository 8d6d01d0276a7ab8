use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::protocol::{check_sample_id, read_json, write_json_atomic};
use crate::error::{Error, Result};
use crate::metrics::store::FeatureStore;

pub const DATASET_FILE: &str = "dataset.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Example {
    pub id: String,
    pub class_id: u32,
    pub class_name: String,
}

/// `dataset.json`: the ordered reference examples plus, per feature backend,
/// a feature store over the reference images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetFile {
    pub schema_version: u32,
    pub id: String,
    pub examples: Vec<Example>,
    /// Backend name → store directory, relative to the dataset directory.
    #[serde(default)]
    pub features: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    root: PathBuf,
    file: DatasetFile,
}

impl Dataset {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let root = dir.as_ref().to_path_buf();
        let path = root.join(DATASET_FILE);
        if !path.exists() {
            return Err(Error::UnknownDataset(format!("no {} in {}", DATASET_FILE, root.display())));
        }
        let file: DatasetFile = read_json(&path)?;
        let ds = Self { root, file };
        ds.validate()?;
        Ok(ds)
    }

    pub fn create(dir: impl AsRef<Path>, file: DatasetFile) -> Result<Self> {
        let ds = Self {
            root: dir.as_ref().to_path_buf(),
            file,
        };
        ds.validate()?;
        std::fs::create_dir_all(&ds.root).map_err(|e| Error::io(&ds.root, e))?;
        write_json_atomic(&ds.root.join(DATASET_FILE), &ds.file)?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        let f = &self.file;
        if f.schema_version != 1 {
            return Err(Error::Validation(format!(
                "dataset {}: unsupported schema_version {}",
                f.id, f.schema_version
            )));
        }
        if f.examples.is_empty() {
            return Err(Error::Validation(format!("dataset {} has no examples", f.id)));
        }
        let mut seen = HashSet::new();
        for ex in &f.examples {
            check_sample_id(&ex.id)?;
            if !seen.insert(ex.id.as_str()) {
                return Err(Error::Validation(format!(
                    "dataset {}: duplicate example id {}",
                    f.id, ex.id
                )));
            }
            if ex.class_name.trim().is_empty() {
                return Err(Error::Validation(format!(
                    "dataset {}: example {} has an empty class name",
                    f.id, ex.id
                )));
            }
        }
        Ok(())
    }

    pub fn id(&self) -> &str {
        &self.file.id
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn examples(&self) -> &[Example] {
        &self.file.examples
    }

    pub fn file(&self) -> &DatasetFile {
        &self.file
    }

    pub fn feature_store_path(&self, backend: &str) -> Result<PathBuf> {
        self.file
            .features
            .get(backend)
            .map(|p| self.root.join(p))
            .ok_or_else(|| {
                Error::Validation(format!(
                    "dataset {} has no reference features for backend `{backend}`",
                    self.file.id
                ))
            })
    }

    pub fn feature_store(&self, backend: &str) -> Result<FeatureStore> {
        FeatureStore::open(self.feature_store_path(backend)?)
    }

    /// Examples per class id.
    pub fn class_counts(&self) -> BTreeMap<u32, usize> {
        let mut counts = BTreeMap::new();
        for ex in &self.file.examples {
            *counts.entry(ex.class_id).or_insert(0) += 1;
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(ids: &[&str]) -> DatasetFile {
        DatasetFile {
            schema_version: 1,
            id: "d".into(),
            examples: ids
                .iter()
                .map(|id| Example {
                    id: id.to_string(),
                    class_id: 0,
                    class_name: "tench".into(),
                })
                .collect(),
            features: BTreeMap::new(),
        }
    }

    #[test]
    fn roundtrip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        Dataset::create(dir.path(), file(&["a", "b"])).unwrap();
        let ds = Dataset::load(dir.path()).unwrap();
        assert_eq!(ds.examples().len(), 2);
        assert_eq!(ds.class_counts()[&0], 2);
        assert!(ds.feature_store("toy").is_err());
        assert!(Dataset::create(dir.path(), file(&["a", "a"])).is_err());
        assert!(matches!(
            Dataset::load(dir.path().join("nope")),
            Err(Error::UnknownDataset(_))
        ));
    }
}
