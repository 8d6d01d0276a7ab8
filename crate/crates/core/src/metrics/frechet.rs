use nalgebra::{DMatrix, SymmetricEigen};

use super::GaussianStats;
use crate::error::{Error, Result};

/// Negative eigenvalues of a covariance below `-PSD_TOLERANCE · λ_max` mean
/// the input is not a covariance at all.
const PSD_TOLERANCE: f64 = 1e-6;
/// Negative eigenvalues of magnitude at most `CLAMP_TOLERANCE · λ_max` are
/// round-off and are clamped to zero.
const CLAMP_TOLERANCE: f64 = 1e-10;

fn square(a: &[f64], dim: usize) -> Result<DMatrix<f64>> {
    if a.len() != dim * dim {
        return Err(Error::DimensionMismatch(format!(
            "{} entries for a {dim}×{dim} matrix",
            a.len()
        )));
    }
    Ok(DMatrix::from_row_slice(dim, dim, a))
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigen-decomposes a symmetric matrix and clamps round-off negatives.
fn psd_eigen(m: DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let mut eig = SymmetricEigen::new(symmetrize(&m));
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &v| a.min(v));
    if min < -PSD_TOLERANCE * max || (max == 0.0 && min < -f64::EPSILON) {
        return Err(Error::NotPsd {
            min_eigenvalue: min,
            max_eigenvalue: max,
        });
    }
    for v in eig.eigenvalues.iter_mut() {
        if *v < 0.0 {
            debug_assert!(*v >= -PSD_TOLERANCE * max);
            *v = 0.0;
        }
    }
    Ok(eig)
}

fn sqrt_matrix(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = psd_eigen(m)?;
    let roots = eig.eigenvalues.map(f64::sqrt);
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&roots) * q.transpose())
}

/// Principal square root of a symmetric PSD matrix (row-major).
pub fn sqrtm_psd(a: &[f64], dim: usize) -> Result<Vec<f64>> {
    let root = sqrt_matrix(square(a, dim)?)?;
    Ok(root.transpose().as_slice().to_vec())
}

/// `Tr((Σa Σb)^{1/2})`, computed as the trace of the square root of the
/// symmetric product `Σa^{1/2} Σb Σa^{1/2}` which has the same spectrum.
pub fn trace_sqrt_product(cov_a: &[f64], cov_b: &[f64], dim: usize) -> Result<f64> {
    let a = square(cov_a, dim)?;
    let b = square(cov_b, dim)?;
    // Validates Σb; the product alone cannot tell which side is broken.
    psd_eigen(b.clone())?;
    let root_a = sqrt_matrix(a)?;
    let product = symmetrize(&(&root_a * b * &root_a));
    let eig = SymmetricEigen::new(product);
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v));
    let mut trace = 0.0;
    for &v in eig.eigenvalues.iter() {
        if v > 0.0 {
            trace += v.sqrt();
        } else if v < -PSD_TOLERANCE * max {
            return Err(Error::NotPsd {
                min_eigenvalue: v,
                max_eigenvalue: max,
            });
        } else if v < -CLAMP_TOLERANCE * max {
            tracing::debug!(eigenvalue = v, max, "clamping negative eigenvalue of Σa½ Σb Σa½");
        }
    }
    Ok(trace)
}

/// Squared Fréchet distance between two Gaussians:
/// `‖μa − μb‖² + Tr(Σa) + Tr(Σb) − 2 Tr((Σa Σb)^{1/2})`, floored at 0.
pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats) -> Result<f64> {
    let d = a.dim();
    if b.dim() != d {
        return Err(Error::DimensionMismatch(format!(
            "statistics of dimension {d} and {}",
            b.dim()
        )));
    }
    if a.mean() == b.mean() && a.cov() == b.cov() {
        return Ok(0.0);
    }
    let mean_term: f64 = a
        .mean()
        .iter()
        .zip(b.mean())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    let trace = |c: &[f64]| (0..d).map(|i| c[i * d + i]).sum::<f64>();
    let cross = trace_sqrt_product(a.cov(), b.cov(), d)?;
    let value = mean_term + trace(a.cov()) + trace(b.cov()) - 2.0 * cross;
    Ok(value.max(0.0))
}
