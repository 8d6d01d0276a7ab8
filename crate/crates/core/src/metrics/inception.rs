use super::ProbabilityMatrix;
use crate::error::{Error, Result};

pub const DEFAULT_SPLITS: usize = 10;
/// Added inside both logarithms of the KL term.
pub const LOG_FLOOR: f64 = 1e-12;

/// Sizes of `splits` contiguous chunks over `rows`; the remainder goes to the
/// earliest chunks. Collapses to one split when there are fewer rows than
/// requested splits.
pub fn split_sizes(rows: usize, splits: usize) -> Vec<usize> {
    let splits = if rows < splits || splits == 0 { 1 } else { splits };
    let base = rows / splits;
    let extra = rows % splits;
    (0..splits).map(|i| base + usize::from(i < extra)).collect()
}

/// Inception Score: per split, `exp(mean_x KL(p(y|x) ‖ p̂(y)))` with `p̂` the
/// split's column mean. Returns the mean and population standard deviation
/// across splits.
pub fn inception_score(probs: &ProbabilityMatrix, splits: usize) -> Result<(f64, f64)> {
    if probs.rows() == 0 {
        return Err(Error::InvalidInput("empty probability matrix".into()));
    }
    let c = probs.classes();
    let mut scores = Vec::new();
    let mut start = 0;
    for size in split_sizes(probs.rows(), splits) {
        let rows = start..start + size;
        start += size;

        let mut marginal = vec![0.0; c];
        for i in rows.clone() {
            for (m, p) in marginal.iter_mut().zip(probs.row(i)) {
                *m += p;
            }
        }
        let log_marginal: Vec<f64> = marginal
            .iter()
            .map(|m| (m / size as f64 + LOG_FLOOR).ln())
            .collect();

        let mut kl_sum = 0.0;
        for i in rows {
            kl_sum += probs
                .row(i)
                .iter()
                .zip(&log_marginal)
                .map(|(p, lm)| p * ((p + LOG_FLOOR).ln() - lm))
                .sum::<f64>();
        }
        scores.push((kl_sum / size as f64).exp());
    }
    let k = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / k;
    let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / k;
    Ok((mean, var.sqrt()))
}
