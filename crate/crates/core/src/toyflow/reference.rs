use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, StandardNormal};

use super::codec::quantize;
use super::field::ToyModel;
use super::sampler::sample_rng;
use crate::error::{Error, Result};
use crate::harness::dataset::{Dataset, DatasetFile, Example};
use crate::metrics::store::{StoreKind, StoreWriter};

/// Backend name under which toy reference features are registered.
pub const TOY_BACKEND: &str = "toy";

/// Write a reference dataset of exact target draws: `per_class` examples per
/// class, interleaved across classes, with a `toy` feature store.
pub fn write_reference(
    dir: &Path,
    dataset_id: &str,
    model: &ToyModel,
    per_class: usize,
    seed: u64,
) -> Result<Dataset> {
    if per_class == 0 {
        return Err(Error::InvalidInput("per_class must be at least 1".into()));
    }
    model.validate()?;
    let store_rel = PathBuf::from("features").join(TOY_BACKEND);
    let mut writer = StoreWriter::create(dir.join(&store_rel), 2, StoreKind::Features)?;
    let mut examples = Vec::new();
    let n = per_class * model.classes.len();
    for i in 0..n {
        let class = &model.classes[i % model.classes.len()];
        let mut rng = sample_rng(seed, i as u64);
        let z: [f64; 2] = [StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)];
        let x = quantize([
            class.mean[0] + class.scale * z[0],
            class.mean[1] + class.scale * z[1],
        ])?;
        let id = format!("ref_{i:06}");
        writer.push(&id, &x)?;
        examples.push(Example {
            id,
            class_id: class.class_id,
            class_name: class.name.clone(),
        });
    }
    writer.finish()?;
    Dataset::create(
        dir,
        DatasetFile {
            schema_version: 1,
            id: dataset_id.to_string(),
            examples,
            features: BTreeMap::from([(TOY_BACKEND.to_string(), store_rel)]),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_layout() {
        let dir = tempfile::tempdir().unwrap();
        let ds = write_reference(dir.path(), "toy4", &ToyModel::default_four(), 5, 42).unwrap();
        assert_eq!(ds.examples().len(), 20);
        assert_eq!(ds.class_counts().values().copied().collect::<Vec<_>>(), [5, 5, 5, 5]);
        let store = ds.feature_store(TOY_BACKEND).unwrap();
        assert_eq!((store.rows(), store.cols()), (20, 2));
        assert_eq!(store.stats().unwrap().count(), 20);
    }
}
