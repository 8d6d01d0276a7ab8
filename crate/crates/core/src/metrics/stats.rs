use serde::{Deserialize, Serialize};

use super::FeatureMatrix;
use crate::error::{Error, Result};

/// Mean, unbiased covariance, and sample count of a feature distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianStats {
    mean: Vec<f64>,
    /// Row-major `dim × dim`.
    cov: Vec<f64>,
    n: usize,
}

impl GaussianStats {
    pub const SYMMETRY_TOLERANCE: f64 = 1e-9;
    pub const DIAGONAL_FLOOR: f64 = -1e-12;

    pub fn new(mean: Vec<f64>, cov: Vec<f64>, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InsufficientSamples { needed: 2, got: n });
        }
        let d = mean.len();
        if d == 0 {
            return Err(Error::InvalidInput("zero-dimensional statistics".into()));
        }
        if cov.len() != d * d {
            return Err(Error::DimensionMismatch(format!(
                "covariance has {} entries, expected {}",
                cov.len(),
                d * d
            )));
        }
        if mean.iter().chain(&cov).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite statistics".into()));
        }
        let scale = cov.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..d {
            if cov[i * d + i] < Self::DIAGONAL_FLOOR {
                return Err(Error::InvalidInput(format!(
                    "negative variance {} on axis {i}",
                    cov[i * d + i]
                )));
            }
            for j in (i + 1)..d {
                let (a, b) = (cov[i * d + j], cov[j * d + i]);
                if (a - b).abs() > Self::SYMMETRY_TOLERANCE * scale {
                    return Err(Error::InvalidInput(format!(
                        "covariance not symmetric at ({i}, {j}): {a} vs {b}"
                    )));
                }
            }
        }
        Ok(Self { mean, cov, n })
    }

    /// Statistics of a known distribution rather than of a sample; the count
    /// is saturated so that merging with it is rejected.
    pub fn analytic(mean: Vec<f64>, cov: Vec<f64>) -> Result<Self> {
        Self::new(mean, cov, usize::MAX)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &[f64] {
        &self.cov
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn merge(&self, other: &GaussianStats) -> Result<GaussianStats> {
        let mut acc = StatsAccumulator::from_stats(self)?;
        acc.merge(&StatsAccumulator::from_stats(other)?)?;
        acc.finish()
    }
}

/// Streaming accumulator for mean and co-moments (Welford / Chan et al.).
///
/// Accumulators built on disjoint batches merge associatively, so batches can
/// be processed on independent workers in any order.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsAccumulator {
    n: usize,
    mean: Vec<f64>,
    /// Sum of outer products of deviations, row-major `dim × dim`.
    m2: Vec<f64>,
}

impl StatsAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim * dim],
        }
    }

    fn from_stats(stats: &GaussianStats) -> Result<Self> {
        if stats.n == usize::MAX {
            return Err(Error::InvalidInput(
                "analytic statistics cannot be merged".into(),
            ));
        }
        let scale = (stats.n - 1) as f64;
        Ok(Self {
            n: stats.n,
            mean: stats.mean.clone(),
            m2: stats.cov.iter().map(|c| c * scale).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn push(&mut self, row: &[f64]) -> Result<()> {
        let d = self.dim();
        if row.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "row of length {} pushed into {d}-dimensional accumulator",
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite feature value".into()));
        }
        self.n += 1;
        let n = self.n as f64;
        let delta: Vec<f64> = row.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        for (m, dl) in self.mean.iter_mut().zip(&delta) {
            *m += dl / n;
        }
        // m2 += delta_old ⊗ delta_new
        for ((x, m), m2_row) in row.iter().zip(&self.mean).zip(self.m2.chunks_exact_mut(d)) {
            let post = x - m;
            for (acc, dl) in m2_row.iter_mut().zip(&delta) {
                *acc += dl * post;
            }
        }
        Ok(())
    }

    pub fn push_matrix(&mut self, features: &FeatureMatrix) -> Result<()> {
        for row in features.iter_rows() {
            self.push(row)?;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &StatsAccumulator) -> Result<()> {
        let d = self.dim();
        if other.dim() != d {
            return Err(Error::DimensionMismatch(format!(
                "cannot merge {}-dimensional accumulator into {d}-dimensional one",
                other.dim()
            )));
        }
        if other.n == 0 {
            return Ok(());
        }
        if self.n == 0 {
            *self = other.clone();
            return Ok(());
        }
        let na = self.n as f64;
        let nb = other.n as f64;
        let n = na + nb;
        let delta: Vec<f64> = other
            .mean
            .iter()
            .zip(&self.mean)
            .map(|(b, a)| b - a)
            .collect();
        let w = na * nb / n;
        for i in 0..d {
            for j in 0..d {
                self.m2[i * d + j] += other.m2[i * d + j] + delta[i] * delta[j] * w;
            }
        }
        for (m, dl) in self.mean.iter_mut().zip(&delta) {
            *m += dl * nb / n;
        }
        self.n += other.n;
        Ok(())
    }

    pub fn finish(&self) -> Result<GaussianStats> {
        if self.n < 2 {
            return Err(Error::InsufficientSamples {
                needed: 2,
                got: self.n,
            });
        }
        let d = self.dim();
        let denom = (self.n - 1) as f64;
        let mut cov: Vec<f64> = self.m2.iter().map(|v| v / denom).collect();
        // Exact symmetry; the two triangles differ only by rounding.
        for i in 0..d {
            for j in (i + 1)..d {
                let s = 0.5 * (cov[i * d + j] + cov[j * d + i]);
                cov[i * d + j] = s;
                cov[j * d + i] = s;
            }
        }
        GaussianStats::new(self.mean.clone(), cov, self.n)
    }
}

pub fn accumulate_stats(features: &FeatureMatrix) -> Result<GaussianStats> {
    if features.rows() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: features.rows(),
        });
    }
    let mut acc = StatsAccumulator::new(features.cols());
    acc.push_matrix(features)?;
    acc.finish()
}
