use std::cmp::Ordering;

use super::MmhmScore;
use crate::error::{Error, Result};
use crate::key::RunKey;
use crate::metrics::MetricReport;

pub type ScoredRun = (RunKey, MmhmScore, MetricReport);

fn compare(a: &ScoredRun, b: &ScoredRun) -> Ordering {
    b.1.value
        .total_cmp(&a.1.value)
        .then_with(|| a.2.fid.total_cmp(&b.2.fid))
        .then_with(|| a.0.cmp(&b.0))
}

/// Descending full-precision MMHM; ties go to lower FID, then to key order.
pub fn rank_configs(mut scored: Vec<ScoredRun>) -> Result<Vec<ScoredRun>> {
    if scored.is_empty() {
        return Err(Error::InvalidInput("nothing to rank".into()));
    }
    scored.sort_by(compare);
    Ok(scored)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::composite::mmhm_from_utilities;
    use crate::key::Steps;

    fn run(name: &str, value: f64, fid: f64) -> ScoredRun {
        let mut score = mmhm_from_utilities([0.5; 4], 0.001);
        score.value = value;
        (
            RunKey::new(name, 7.0, Steps::Fixed(25), "imagenet", 42),
            score,
            MetricReport::new(fid, 1.0, 0.0, 0.0, 0.0),
        )
    }

    fn names(v: &[ScoredRun]) -> Vec<&str> {
        v.iter().map(|r| r.0.model.as_str()).collect()
    }

    #[test]
    fn full_precision_wins() {
        let out = rank_configs(vec![run("B", 0.5126, 1.0), run("A", 0.5129, 50.0)]).unwrap();
        assert_eq!(names(&out), ["A", "B"]);
    }

    #[test]
    fn tie_breaks() {
        let out = rank_configs(vec![run("x", 0.7, 20.0), run("y", 0.7, 10.0)]).unwrap();
        assert_eq!(names(&out), ["y", "x"]);
        let out = rank_configs(vec![run("b", 0.7, 10.0), run("a", 0.7, 10.0)]).unwrap();
        assert_eq!(names(&out), ["a", "b"]);
    }

    #[test]
    fn single_and_empty() {
        assert_eq!(names(&rank_configs(vec![run("z", 0.1, 1.0)]).unwrap()), ["z"]);
        assert!(rank_configs(vec![]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn permutation_invariant(
                vals in proptest::collection::vec((0u8..5, 0u8..4), 1..12),
                seed in any::<u64>(),
            ) {
                let runs: Vec<ScoredRun> = vals
                    .iter()
                    .enumerate()
                    .map(|(i, (v, f))| run(&format!("m{i}"), *v as f64 / 4.0, *f as f64))
                    .collect();
                let mut shuffled = runs.clone();
                // Fisher-Yates with a simple LCG
                let mut s = seed;
                for i in (1..shuffled.len()).rev() {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    shuffled.swap(i, (s >> 33) as usize % (i + 1));
                }
                let a = rank_configs(runs).unwrap();
                let b = rank_configs(shuffled).unwrap();
                prop_assert_eq!(names(&a), names(&b));
            }
        }
    }
}
