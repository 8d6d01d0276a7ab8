//! Raw metric kernels: Fréchet distance over Gaussian feature statistics,
//! Inception Score, and the two embedding-alignment scores.
//!
//! All arithmetic is done in `f64` regardless of how features were stored.

mod alignment;
mod frechet;
mod inception;
mod matrix;
mod stats;
pub mod store;

pub use alignment::{clip_score, pick_score, pick_score_precomputed};
pub use frechet::{frechet_distance, sqrtm_psd, trace_sqrt_product};
pub use inception::{inception_score, split_sizes, DEFAULT_SPLITS, LOG_FLOOR};
pub use matrix::{FeatureMatrix, ProbabilityMatrix};
pub use stats::{accumulate_stats, GaussianStats, StatsAccumulator};

use serde::{Deserialize, Serialize};

/// The four raw metrics of one generation run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub fid: f64,
    pub is_mean: f64,
    pub is_std: f64,
    pub clip_score: f64,
    pub pick_score: f64,
}

impl MetricReport {
    pub fn new(fid: f64, is_mean: f64, is_std: f64, clip_score: f64, pick_score: f64) -> Self {
        Self {
            fid,
            is_mean,
            is_std,
            clip_score,
            pick_score,
        }
    }

    pub fn is_finite(&self) -> bool {
        [
            self.fid,
            self.is_mean,
            self.is_std,
            self.clip_score,
            self.pick_score,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}
