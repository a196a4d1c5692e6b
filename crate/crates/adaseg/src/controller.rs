//! One controller iteration per checkpoint: candidate sampling around the
//! predicted weights, the positivity policy, reward collection, the policy
//! update and the per-checkpoint snapshot archive.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{reinforce_update, AdamState, PolicyParams, PolicySnapshot, ReinforceStats};
use crate::rewards::combined_reward;
use crate::rng::RunRng;
use crate::types::{argmax, CheckpointRecord, LossVector, ScoreVector, WeightVector, WEIGHT_FLOOR};

/// The m weight candidates issued for one training interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    /// Predicted mean the candidates were sampled around.
    pub mu: WeightVector,
    /// Raw samples; may contain negative components.
    pub raw: Vec<WeightVector>,
    /// Elementwise-floored samples actually handed to trainees.
    pub applied: Vec<WeightVector>,
    /// False where the raw sample dipped below zero.
    pub validity: Vec<bool>,
}

/// Draw m candidates from an isotropic Normal around `mu`. Samples are drawn
/// candidate-major (all components of candidate j before candidate j+1) so
/// seeded replays are stable.
pub fn sample_candidates(
    mu: &WeightVector,
    sigma: f64,
    m: usize,
    rng: &mut RunRng,
) -> CandidateSet {
    assert!(sigma >= 0.0, "sigma must be nonnegative");
    let mut raw = Vec::with_capacity(m);
    for _ in 0..m {
        let values: Vec<f64> = mu
            .values()
            .iter()
            .map(|mean| {
                let z: f64 = StandardNormal.sample(rng);
                mean + sigma * z
            })
            .collect();
        raw.push(WeightVector::new(values).expect("finite mean and sigma give finite samples"));
    }
    let applied: Vec<WeightVector> = raw.iter().map(|w| w.floored(WEIGHT_FLOOR)).collect();
    let validity: Vec<bool> = raw.iter().map(WeightVector::all_nonnegative).collect();
    CandidateSet {
        mu: mu.clone(),
        raw,
        applied,
        validity,
    }
}

/// Ordered archive of the per-checkpoint policy snapshots.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SnapshotStore {
    snapshots: Vec<PolicySnapshot>,
}

impl SnapshotStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append a snapshot; indices must be strictly increasing.
    pub fn push(&mut self, snapshot: PolicySnapshot) -> Result<()> {
        if let Some(last) = self.snapshots.last() {
            if snapshot.t <= last.t {
                return Err(Error::Config(format!(
                    "snapshot index {} does not advance past {}",
                    snapshot.t, last.t
                )));
            }
        }
        self.snapshots.push(snapshot);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn snapshots(&self) -> &[PolicySnapshot] {
        &self.snapshots
    }

    pub fn into_snapshots(self) -> Vec<PolicySnapshot> {
        self.snapshots
    }
}

/// Controller hyperparameters, copied out of the run config.
#[derive(Debug, Clone, Copy)]
pub struct ControllerSettings {
    pub sigma: f64,
    pub population: usize,
    pub total_checkpoints: u32,
    pub policy_lr: f64,
    pub policy_weight_decay: f64,
}

struct Pending {
    state: LossVector,
    set: CandidateSet,
}

/// Output of one checkpoint step.
pub struct CheckpointStep {
    pub record: CheckpointRecord,
    /// Candidates for the next interval (unused after the final checkpoint).
    pub next: CandidateSet,
    pub update: ReinforceStats,
}

/// Drives the policy across the exploration phase. Holds the candidates
/// currently in flight so each update uses the loss state that generated
/// them.
pub struct Controller {
    pub params: PolicyParams,
    pub adam: AdamState,
    pub store: SnapshotStore,
    settings: ControllerSettings,
    pending: Option<Pending>,
}

impl Controller {
    pub fn new(params: PolicyParams, settings: ControllerSettings) -> Self {
        let adam = AdamState::new(&params);
        Self {
            params,
            adam,
            store: SnapshotStore::new(),
            settings,
            pending: None,
        }
    }

    pub fn settings(&self) -> ControllerSettings {
        self.settings
    }

    /// Predict the first weight mean from the pseudo-epoch losses and sample
    /// the first candidate set.
    pub fn issue_initial(&mut self, state: &LossVector, rng: &mut RunRng) -> Result<CandidateSet> {
        if self.pending.is_some() {
            return Err(Error::Config(
                "initial candidates already issued for this controller".into(),
            ));
        }
        let mu = self.params.weights_from_losses(state)?;
        let set = sample_candidates(&mu, self.settings.sigma, self.settings.population, rng);
        self.pending = Some(Pending {
            state: state.clone(),
            set: set.clone(),
        });
        Ok(set)
    }

    /// Consume the scores of the models trained with the in-flight
    /// candidates: compute rewards, update the policy on the state that
    /// generated those candidates, archive the post-update snapshot, then
    /// predict the next mean from `l_best` and sample the next candidates.
    pub fn checkpoint_step(
        &mut self,
        t: u32,
        l_best: &LossVector,
        scores: &ScoreVector,
        prev_best: f64,
        rng: &mut RunRng,
        rng_id: String,
    ) -> Result<CheckpointStep> {
        let pending = self.pending.take().ok_or_else(|| {
            Error::Config("checkpoint_step called with no candidates in flight".into())
        })?;
        if scores.len() != self.settings.population {
            return Err(Error::Dimension(format!(
                "expected {} scores, got {}",
                self.settings.population,
                scores.len()
            )));
        }

        let rewards = combined_reward(
            scores,
            prev_best,
            t,
            self.settings.total_checkpoints,
            &pending.set.validity,
        );
        let update = reinforce_update(
            &mut self.params,
            &mut self.adam,
            &pending.state,
            &pending.set.raw,
            &rewards.values,
            self.settings.sigma,
            self.settings.policy_lr,
            self.settings.policy_weight_decay,
        )?;
        self.store.push(PolicySnapshot {
            t,
            params: self.params.clone(),
            rng_id,
        })?;

        let mu = self.params.weights_from_losses(l_best)?;
        let next = sample_candidates(&mu, self.settings.sigma, self.settings.population, rng);
        let record = CheckpointRecord::new(
            t,
            pending.state,
            pending.set.raw,
            pending.set.applied,
            pending.set.validity,
            scores.clone(),
            rewards.values,
            prev_best,
        )?;
        debug_assert_eq!(record.best_index, argmax(scores.values()));
        self.pending = Some(Pending {
            state: l_best.clone(),
            set: next.clone(),
        });
        Ok(CheckpointStep {
            record,
            next,
            update,
        })
    }
}
