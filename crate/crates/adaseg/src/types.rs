//! Core value types: loss, weight and score vectors plus per-checkpoint
//! records. All are immutable once constructed and safe to share across
//! threads.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to loss values before the weight-recovery division, so a
/// loss that reaches exactly zero cannot divide out.
pub const LOSS_FLOOR: f64 = 1e-8;

/// Positivity floor on weights handed to trainees; raw candidate samples may
/// be negative, applied weights never are.
pub const WEIGHT_FLOOR: f64 = 1e-3;

/// Population standard deviations below this are treated as degenerate: the
/// batch carries no ranking signal and rewards fall back to zero.
pub const STD_FLOOR: f64 = 1e-12;

fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Index of the largest element. Ties break toward the lowest index so that
/// seeded replays are total-ordered.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Per-loss mean values over a training interval: the controller's state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LossVector(Vec<f64>);

impl LossVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Config("loss vector must not be empty".into()));
        }
        ensure_finite(&values, "loss vector")?;
        if values.iter().any(|v| *v < 0.0) {
            return Err(Error::Config("loss values must be nonnegative".into()));
        }
        Ok(Self(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for LossVector {
    type Error = Error;
    fn try_from(values: Vec<f64>) -> Result<Self> {
        LossVector::new(values)
    }
}

impl From<LossVector> for Vec<f64> {
    fn from(v: LossVector) -> Self {
        v.0
    }
}

/// Per-loss multipliers applied to the trainee's composite loss. A raw
/// sample may contain negative components; see [`WeightVector::floored`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Config("weight vector must not be empty".into()));
        }
        ensure_finite(&values, "weight vector")?;
        Ok(Self(values))
    }

    /// All-ones weights (the uniform baseline setting).
    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Elementwise `max(w, floor)`: the positivity policy applied before a
    /// weight vector reaches a trainee.
    pub fn floored(&self, floor: f64) -> WeightVector {
        Self(self.0.iter().map(|w| w.max(floor)).collect())
    }

    /// True when every component clears the positivity floor.
    pub fn is_applied(&self, floor: f64) -> bool {
        self.0.iter().all(|w| *w >= floor)
    }

    pub fn all_nonnegative(&self) -> bool {
        self.0.iter().all(|w| *w >= 0.0)
    }
}

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = Error;
    fn try_from(values: Vec<f64>) -> Result<Self> {
        WeightVector::new(values)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(v: WeightVector) -> Self {
        v.0
    }
}

/// Validation scores of the m population members at one checkpoint; higher
/// is better.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Config(
                "score vector needs at least two entries (population rewards need std)".into(),
            ));
        }
        ensure_finite(&values, "score vector")?;
        Ok(Self(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for ScoreVector {
    type Error = Error;
    fn try_from(values: Vec<f64>) -> Result<Self> {
        ScoreVector::new(values)
    }
}

impl From<ScoreVector> for Vec<f64> {
    fn from(v: ScoreVector) -> Self {
        v.0
    }
}

/// Everything that happened at one exploration checkpoint. `best_index` is
/// recomputed on construction; a record whose stored index disagrees with
/// `argmax(scores)` cannot be built or deserialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCheckpointRecord", into = "RawCheckpointRecord")]
pub struct CheckpointRecord {
    /// Checkpoint index, 1-based.
    pub t: u32,
    /// The loss state that generated the candidates trained in this interval.
    pub loss_state: LossVector,
    /// Raw candidate samples, one per population member.
    pub candidates: Vec<WeightVector>,
    /// Floored weights that were actually applied.
    pub applied: Vec<WeightVector>,
    /// False where the raw candidate contained a negative component.
    pub validity: Vec<bool>,
    pub scores: ScoreVector,
    pub rewards: Vec<f64>,
    pub best_index: usize,
    pub best_score: f64,
    pub prev_best_score: f64,
}

impl CheckpointRecord {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        t: u32,
        loss_state: LossVector,
        candidates: Vec<WeightVector>,
        applied: Vec<WeightVector>,
        validity: Vec<bool>,
        scores: ScoreVector,
        rewards: Vec<f64>,
        prev_best_score: f64,
    ) -> Result<Self> {
        let m = scores.len();
        if candidates.len() != m || applied.len() != m || validity.len() != m || rewards.len() != m
        {
            return Err(Error::Dimension(format!(
                "checkpoint record: population size disagrees (scores={m}, candidates={}, applied={}, validity={}, rewards={})",
                candidates.len(),
                applied.len(),
                validity.len(),
                rewards.len()
            )));
        }
        if !prev_best_score.is_finite() {
            return Err(Error::NonFinite("prev_best_score".into()));
        }
        ensure_finite(&rewards, "rewards")?;
        let best_index = argmax(scores.values());
        let best_score = scores.values()[best_index];
        Ok(Self {
            t,
            loss_state,
            candidates,
            applied,
            validity,
            scores,
            rewards,
            best_index,
            best_score,
            prev_best_score,
        })
    }
}

/// Serde mirror of [`CheckpointRecord`] used to re-validate the argmax
/// invariant on deserialization.
#[derive(Serialize, Deserialize)]
struct RawCheckpointRecord {
    t: u32,
    loss_state: LossVector,
    candidates: Vec<WeightVector>,
    applied: Vec<WeightVector>,
    validity: Vec<bool>,
    scores: ScoreVector,
    rewards: Vec<f64>,
    best_index: usize,
    best_score: f64,
    prev_best_score: f64,
}

impl TryFrom<RawCheckpointRecord> for CheckpointRecord {
    type Error = Error;
    fn try_from(raw: RawCheckpointRecord) -> Result<Self> {
        let rebuilt = CheckpointRecord::new(
            raw.t,
            raw.loss_state,
            raw.candidates,
            raw.applied,
            raw.validity,
            raw.scores,
            raw.rewards,
            raw.prev_best_score,
        )?;
        if rebuilt.best_index != raw.best_index || rebuilt.best_score != raw.best_score {
            return Err(Error::Config(format!(
                "checkpoint record: stored best_index {} disagrees with argmax(scores) {}",
                raw.best_index, rebuilt.best_index
            )));
        }
        Ok(rebuilt)
    }
}

impl From<CheckpointRecord> for RawCheckpointRecord {
    fn from(r: CheckpointRecord) -> Self {
        RawCheckpointRecord {
            t: r.t,
            loss_state: r.loss_state,
            candidates: r.candidates,
            applied: r.applied,
            validity: r.validity,
            scores: r.scores,
            rewards: r.rewards,
            best_index: r.best_index,
            best_score: r.best_score,
            prev_best_score: r.prev_best_score,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(scores: Vec<f64>) -> CheckpointRecord {
        let m = scores.len();
        CheckpointRecord::new(
            1,
            LossVector::new(vec![1.0, 2.0]).unwrap(),
            vec![WeightVector::uniform(2); m],
            vec![WeightVector::uniform(2); m],
            vec![true; m],
            ScoreVector::new(scores).unwrap(),
            vec![0.0; m],
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn loss_vector_rejects_negative_and_non_finite() {
        assert!(LossVector::new(vec![1.0, -0.1]).is_err());
        assert!(LossVector::new(vec![f64::NAN]).is_err());
        assert!(LossVector::new(vec![]).is_err());
        assert!(LossVector::new(vec![0.0, 3.5]).is_ok());
    }

    #[test]
    fn weight_floor_is_elementwise_max() {
        let w = WeightVector::new(vec![-0.4, 0.0, 2.0]).unwrap();
        let floored = w.floored(WEIGHT_FLOOR);
        assert_eq!(floored.values(), &[WEIGHT_FLOOR, WEIGHT_FLOOR, 2.0]);
        assert!(floored.is_applied(WEIGHT_FLOOR));
        assert!(!w.is_applied(WEIGHT_FLOOR));
    }

    #[test]
    fn argmax_breaks_ties_toward_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[5.0]), 0);
    }

    #[test]
    fn checkpoint_record_recomputes_best() {
        let r = record(vec![0.5, 2.0, 2.0]);
        assert_eq!(r.best_index, 1);
        assert_eq!(r.best_score, 2.0);
    }

    #[test]
    fn tampered_best_index_cannot_deserialize() {
        let r = record(vec![0.5, 2.0, 1.0]);
        let mut as_json: serde_json::Value = serde_json::to_value(&r).unwrap();
        as_json["best_index"] = serde_json::json!(0);
        let back: std::result::Result<CheckpointRecord, _> = serde_json::from_value(as_json);
        assert!(back.is_err());
    }

    #[test]
    fn score_vector_needs_two_entries() {
        assert!(ScoreVector::new(vec![1.0]).is_err());
        assert!(ScoreVector::new(vec![1.0, 2.0]).is_ok());
    }
}
