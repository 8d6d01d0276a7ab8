//! MinMax Harmonic Mean composite: min-max normalize each metric against a
//! persisted bounds registry, then take the ε-regularized harmonic mean of the
//! four utilities.

mod bounds;
mod rank;

pub use bounds::{compute_bounds, BoundsRegistry, MetricBounds, MetricId, Orientation};
pub use rank::{rank_configs, ScoredRun};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::metrics::MetricReport;

pub const DEFAULT_EPSILON: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmhmScore {
    pub value: f64,
    /// Utilities in [`MetricId::ALL`] order.
    pub utilities: [f64; 4],
    pub epsilon: f64,
}

/// `4 / Σ (ε + u)⁻¹`. Equal utilities return exactly `u + ε`.
pub fn mmhm_from_utilities(utilities: [f64; 4], epsilon: f64) -> MmhmScore {
    let shifted = utilities.map(|u| u + epsilon);
    let value = if shifted.iter().all(|s| *s == shifted[0]) {
        shifted[0]
    } else {
        4.0 / shifted.iter().map(|s| 1.0 / s).sum::<f64>()
    };
    MmhmScore {
        value,
        utilities,
        epsilon,
    }
}

pub fn mmhm(report: &MetricReport, bounds: &BoundsRegistry, epsilon: f64) -> Result<MmhmScore> {
    let values = [
        report.fid,
        report.is_mean,
        report.clip_score,
        report.pick_score,
    ];
    let mut utilities = [0.0; 4];
    for ((u, id), v) in utilities.iter_mut().zip(MetricId::ALL).zip(values) {
        *u = bounds.normalize(id, v)?;
    }
    Ok(mmhm_from_utilities(utilities, epsilon))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score(fid: f64, is: f64, clip: f64, pick: f64) -> f64 {
        let r = MetricReport::new(fid, is, 0.0, clip, pick);
        mmhm(&r, &BoundsRegistry::imagenet_reference(), DEFAULT_EPSILON)
            .unwrap()
            .value
    }

    #[test]
    fn published_rows() {
        // RAE [25, 7], MeanFlow [25, 7], Scale RAE* [25, 1.42]
        assert!((score(11.60, 382.36, 31.33, 20.58) - 0.886).abs() < 5e-4);
        assert!((score(25.12, 346.19, 31.51, 20.52) - 0.856).abs() < 5e-4);
        assert!((score(21.96, 90.40, 30.03, 21.06) - 0.513).abs() < 5e-4);
        // MeanFlow [25, 7] on ImageNetV2, scored with ImageNet bounds
        assert!((score(39.47, 261.47, 31.52, 20.53) - 0.787).abs() < 5e-4);
    }

    #[test]
    fn epsilon_floor() {
        let s = mmhm_from_utilities([0.0; 4], DEFAULT_EPSILON);
        assert_eq!(s.value, 0.001);
        // Worst value on every axis.
        assert!((score(317.55, 1.53, 20.39, 16.89) - 0.001).abs() < 1e-15);
    }

    #[test]
    fn equal_utilities_are_exact() {
        for u in [0.0, 0.1, 0.37, 0.9999, 1.3] {
            assert_eq!(mmhm_from_utilities([u; 4], 0.001).value, u + 0.001);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn monotone_in_each_utility(
                u in proptest::array::uniform4(0.0f64..1.5),
                axis in 0usize..4,
                bump in 0.0f64..1.0,
            ) {
                let base = mmhm_from_utilities(u, DEFAULT_EPSILON).value;
                let mut v = u;
                v[axis] += bump;
                let up = mmhm_from_utilities(v, DEFAULT_EPSILON).value;
                prop_assert!(up >= base - 1e-15 * base.abs(), "{} < {}", up, base);
            }
        }
    }
}
