//! Parallel drivers over a planned sweep. Each run is independent, so the
//! pool size only affects wall time.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;

use super::backend::Backends;
use super::dataset::Dataset;
use super::evaluate::{evaluate_and_persist, reference_stats, RunReport, CACHE_DIR};
use super::plan::RunSpec;
use super::run::{execute_run, RunOutcome};
use crate::error::{Error, Result};
use crate::metrics::GaussianStats;

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("worker pool: {e}")))
}

/// Execute every run; results are in plan order.
pub fn run_sweep(specs: &[RunSpec], workers: usize) -> Result<Vec<Result<RunOutcome>>> {
    let pool = pool(workers)?;
    Ok(pool.install(|| {
        specs
            .par_iter()
            .map(|s| {
                let r = execute_run(s);
                match &r {
                    Ok(o) if o.invoked => tracing::info!(run = %s.key, "run complete"),
                    Ok(_) => tracing::info!(run = %s.key, "run already complete"),
                    Err(e) => tracing::warn!(run = %s.key, error = %e, "run failed"),
                }
                r
            })
            .collect()
    }))
}

/// Evaluate every run against its dataset's reference statistics.
pub fn eval_sweep(
    specs: &[RunSpec],
    datasets: &[Dataset],
    backends: &Backends,
    pick_logit_scale: f64,
    out: &Path,
    workers: usize,
) -> Result<Vec<Result<RunReport>>> {
    let cache = out.join(CACHE_DIR);
    // reference stats once per dataset, sequentially, so the cache is
    // never written concurrently
    let mut refs: BTreeMap<&str, GaussianStats> = BTreeMap::new();
    for spec in specs {
        let id = spec.key.dataset.as_str();
        if refs.contains_key(id) {
            continue;
        }
        let ds = datasets
            .iter()
            .find(|d| d.id() == id)
            .ok_or_else(|| Error::UnknownDataset(id.to_string()))?;
        refs.insert(id, reference_stats(ds, &backends.feature, &cache)?);
    }
    let pool = pool(workers)?;
    Ok(pool.install(|| {
        specs
            .par_iter()
            .map(|s| {
                let r = evaluate_and_persist(
                    &s.output_dir,
                    &refs[s.key.dataset.as_str()],
                    backends,
                    pick_logit_scale,
                );
                if let Err(e) = &r {
                    tracing::warn!(run = %s.key, error = %e, "evaluation failed");
                }
                r
            })
            .collect()
    }))
}
