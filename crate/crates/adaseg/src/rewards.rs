//! Reward shaping for the controller: population-standardized local rewards,
//! standardized improvement rewards, and the scaled combination with the
//! negative-sample penalty.

use serde::{Deserialize, Serialize};

use crate::types::{ScoreVector, STD_FLOOR};

/// Mean and population standard deviation (divisor m, not m-1).
pub fn mean_and_population_std(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
    (mean, var.sqrt())
}

/// Standardize the checkpoint scores to zero mean and unit variance. A
/// degenerate population (std below the floor) carries no ranking signal and
/// maps to all zeros.
pub fn local_reward(scores: &ScoreVector) -> Vec<f64> {
    let (mean, std) = mean_and_population_std(scores.values());
    if std < STD_FLOOR {
        return vec![0.0; scores.len()];
    }
    scores.values().iter().map(|v| (v - mean) / std).collect()
}

/// Standardized improvement over the previous checkpoint's best score:
/// (v - prev_best) / std(v - prev_best).
pub fn improvement_reward(scores: &ScoreVector, prev_best: f64) -> Vec<f64> {
    let imp: Vec<f64> = scores.values().iter().map(|v| v - prev_best).collect();
    let (_, std) = mean_and_population_std(&imp);
    if std < STD_FLOOR {
        return vec![0.0; scores.len()];
    }
    imp.iter().map(|v| v / std).collect()
}

/// Combined per-candidate rewards; invalid candidates carry exactly -1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardVector {
    pub values: Vec<f64>,
    pub validity: Vec<bool>,
}

/// The full reward of one checkpoint: (t/T) * (local + improvement) for
/// valid candidates, -1 exactly for candidates that sampled a negative
/// component. The normalization statistics are computed over all m entries,
/// invalid ones included, before the penalty overwrites them.
pub fn combined_reward(
    scores: &ScoreVector,
    prev_best: f64,
    t: u32,
    total: u32,
    validity: &[bool],
) -> RewardVector {
    assert!(t >= 1 && t <= total, "checkpoint index {t} outside 1..={total}");
    assert_eq!(validity.len(), scores.len());
    let scale = f64::from(t) / f64::from(total);
    let local = local_reward(scores);
    let imp = improvement_reward(scores, prev_best);
    let values = local
        .iter()
        .zip(&imp)
        .zip(validity)
        .map(|((l, i), valid)| if *valid { scale * (l + i) } else { -1.0 })
        .collect();
    RewardVector {
        values,
        validity: validity.to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::argmax;
    use approx::assert_relative_eq;

    fn scores(values: &[f64]) -> ScoreVector {
        ScoreVector::new(values.to_vec()).unwrap()
    }

    #[test]
    fn local_reward_hand_case() {
        // (1, 2, 3): population std is sqrt(2/3).
        let r = local_reward(&scores(&[1.0, 2.0, 3.0]));
        let expected = (2.0f64 / 3.0).sqrt().recip();
        assert_relative_eq!(r[0], -expected, max_relative = 1e-12);
        assert_relative_eq!(r[1], 0.0, epsilon = 1e-12);
        assert_relative_eq!(r[2], expected, max_relative = 1e-12);
        assert_relative_eq!(r[2], 1.224744871391589, max_relative = 1e-12);
    }

    #[test]
    fn constant_scores_give_zero_reward() {
        let r = local_reward(&scores(&[4.2; 5]));
        assert_eq!(r, vec![0.0; 5]);
    }

    #[test]
    fn two_point_case_is_plus_minus_one() {
        // Population std of two points is half their gap.
        let r = local_reward(&scores(&[40.7, 41.7]));
        assert_relative_eq!(r[0], -1.0, max_relative = 1e-12);
        assert_relative_eq!(r[1], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn improvement_hand_case() {
        // v = (42, 43), prev_best = 41: v_imp = (1, 2), std = 0.5 -> (2, 4).
        let r = improvement_reward(&scores(&[42.0, 43.0]), 41.0);
        assert_relative_eq!(r[0], 2.0, max_relative = 1e-12);
        assert_relative_eq!(r[1], 4.0, max_relative = 1e-12);
    }

    #[test]
    fn no_improvement_gives_zeros() {
        let r = improvement_reward(&scores(&[41.0, 41.0, 41.0]), 41.0);
        assert_eq!(r, vec![0.0; 3]);
    }

    #[test]
    fn improvement_is_translation_invariant() {
        let a = improvement_reward(&scores(&[40.0, 42.0, 45.0]), 39.0);
        let b = improvement_reward(&scores(&[140.0, 142.0, 145.0]), 139.0);
        for (x, y) in a.iter().zip(&b) {
            assert_relative_eq!(x, y, max_relative = 1e-12);
        }
    }

    #[test]
    fn combined_scales_linearly_in_t() {
        let v = scores(&[40.0, 41.0, 43.0]);
        let validity = [true, true, true];
        let full = combined_reward(&v, 39.5, 8, 8, &validity);
        let half = combined_reward(&v, 39.5, 4, 8, &validity);
        for (f, h) in full.values.iter().zip(&half.values) {
            assert_relative_eq!(*h, 0.5 * f, max_relative = 1e-12);
        }
    }

    #[test]
    fn invalid_candidates_get_exactly_minus_one() {
        let v = scores(&[40.0, 99.0, 43.0]);
        let r = combined_reward(&v, 39.5, 2, 8, &[true, false, true]);
        assert_eq!(r.values[1], -1.0);
        assert!(r.values[0].is_finite() && r.values[2].is_finite());
        // Statistics included the invalid entry's score.
        let expected_local = local_reward(&v);
        let expected_imp = improvement_reward(&v, 39.5);
        assert_relative_eq!(
            r.values[0],
            0.25 * (expected_local[0] + expected_imp[0]),
            max_relative = 1e-12
        );
    }

    #[test]
    fn valid_reward_argmax_follows_score_argmax() {
        let v = scores(&[10.0, 14.0, 11.5, 13.9]);
        let r = combined_reward(&v, 9.0, 3, 8, &[true, true, true, true]);
        assert_eq!(argmax(&r.values), argmax(v.values()));
    }
}
