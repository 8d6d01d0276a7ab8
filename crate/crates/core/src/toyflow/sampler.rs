use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::field::{cfg_velocity, Point, Target};
use crate::error::{Error, Result};
use crate::metrics::{accumulate_stats, frechet_distance, FeatureMatrix, GaussianStats};

/// Noise source for sample `index` of a run seeded with `seed`.
///
/// Each sample gets its own ChaCha stream, so results do not depend on how
/// samples are split across workers.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn initial_noise(seed: u64, index: u64) -> Point {
    let mut rng = sample_rng(seed, index);
    [StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)]
}

/// Left-endpoint Euler integration on `t_k = k / n_steps`.
pub fn integrate(
    x0: Point,
    n_steps: u32,
    w: f64,
    cond: &Target,
    uncond: &Target,
) -> Result<Point> {
    if n_steps == 0 {
        return Err(Error::InvalidInput("n_steps must be at least 1".into()));
    }
    let dt = 1.0 / n_steps as f64;
    let mut x = x0;
    for k in 0..n_steps {
        let t = k as f64 / n_steps as f64;
        let v = cfg_velocity(x, t, w, cond, uncond)?;
        x = [x[0] + dt * v[0], x[1] + dt * v[1]];
    }
    Ok(x)
}

/// Model evaluations per sample: guided steps need both fields.
pub fn nfe_per_sample(n_steps: u32, w: f64) -> u32 {
    if w == 1.0 {
        n_steps
    } else {
        2 * n_steps
    }
}

pub fn euler_sample(
    cond: &Target,
    uncond: &Target,
    n_steps: u32,
    n_samples: usize,
    w: f64,
    seed: u64,
) -> Result<Vec<Point>> {
    if w < 0.0 || !w.is_finite() {
        return Err(Error::InvalidInput(format!("guidance weight must be ≥ 0, got {w}")));
    }
    (0..n_samples as u64)
        .into_par_iter()
        .map(|i| integrate(initial_noise(seed, i), n_steps, w, cond, uncond))
        .collect()
}

pub fn points_to_matrix(points: &[Point]) -> Result<FeatureMatrix> {
    FeatureMatrix::from_rows_indexed(
        points.len(),
        2,
        points.iter().flat_map(|p| p.iter().copied()).collect(),
    )
}

pub fn empirical_stats(points: &[Point]) -> Result<GaussianStats> {
    accumulate_stats(&points_to_matrix(points)?)
}

/// Fréchet distance between `empirical` and the exact target moments.
pub fn analytic_frechet(target: &Target, empirical: &GaussianStats) -> Result<f64> {
    if empirical.dim() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "toy statistics are 2-dimensional, got {}",
            empirical.dim()
        )));
    }
    let s2 = target.scale * target.scale;
    let exact = GaussianStats::analytic(target.mean.to_vec(), vec![s2, 0.0, 0.0, s2])?;
    frechet_distance(&exact, empirical)
}
