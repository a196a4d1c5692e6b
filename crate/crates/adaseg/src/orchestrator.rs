//! The full training procedure: a pseudo epoch to obtain the initial loss
//! state, the exploration-and-adaptation loop over T checkpoints with m
//! trainees in parallel, and transfer training over E epochs under the
//! policy ensemble.

use rayon::prelude::*;

use crate::config::{LossGrouping, RunConfig};
use crate::controller::{Controller, ControllerSettings};
use crate::ensemble::PolicyEnsemble;
use crate::error::{Error, Result};
use crate::logging::{Record, RunLog};
use crate::policy::PolicyParams;
use crate::rng::{derive_rng, StreamId};
use crate::trainee::{make_trainee, IntervalReport, SyntheticTrainee, Trainee};
use crate::types::{argmax, CheckpointRecord, LossVector, ScoreVector, WeightVector};

/// Result of the weight-one warmup epoch.
pub struct PseudoEpoch<T> {
    pub trainee: T,
    pub report: IntervalReport,
    /// Grouped interval-mean losses: the controller's initial state.
    pub initial_state: LossVector,
    /// Post-warmup evaluation; baseline for the first improvement reward.
    pub initial_score: f64,
}

/// Train a fresh trainee for one interval with every weight equal to 1,
/// returning the state that seeds the controller.
pub fn pseudo_epoch_with<T: Trainee>(
    mut trainee: T,
    grouping: &LossGrouping,
    iterations: u32,
) -> Result<PseudoEpoch<T>> {
    let ones = WeightVector::uniform(grouping.effective_len());
    let report = trainee.train_interval(&ones, grouping, iterations)?;
    let initial_state = grouping.collapse_losses(&report.mean)?;
    let initial_score = trainee.evaluate();
    Ok(PseudoEpoch {
        trainee,
        report,
        initial_state,
        initial_score,
    })
}

/// Pseudo epoch over the configured synthetic trainee.
pub fn pseudo_epoch(config: &RunConfig) -> Result<PseudoEpoch<SyntheticTrainee>> {
    let grouping = config.grouping();
    let trainee = make_trainee(&config.trainee, config.master_seed)?;
    pseudo_epoch_with(trainee, &grouping, config.interval_iterations())
}

/// Snapshot of one checkpoint handed to an observer, after the broadcast.
pub struct CheckpointEvent<'a> {
    pub t: u32,
    pub record: &'a CheckpointRecord,
    /// State digests of all members; equal after every broadcast.
    pub member_digests: Vec<u64>,
}

pub struct ExploreOutcome<T> {
    /// The best-performing model at the final checkpoint.
    pub best: T,
    pub best_score: f64,
    /// All policy snapshots, ready for transfer.
    pub ensemble: PolicyEnsemble,
    pub records: Vec<CheckpointRecord>,
    pub log: RunLog,
}

/// Exploration over the configured synthetic trainee.
pub fn explore(config: &RunConfig) -> Result<ExploreOutcome<SyntheticTrainee>> {
    let trainee = make_trainee(&config.trainee, config.master_seed)?;
    explore_with(config, trainee, None)
}

/// Exploration with an arbitrary trainee implementation. Per interval the m
/// members train concurrently; trainee randomness lives in per-member
/// streams, so the outcome does not depend on the thread pool.
pub fn explore_with<T: Trainee>(
    config: &RunConfig,
    base: T,
    mut observer: Option<&mut dyn FnMut(CheckpointEvent<'_>)>,
) -> Result<ExploreOutcome<T>> {
    let config = config.clone().validate()?;
    let grouping = config.grouping();
    let q = config.interval_iterations();
    let seed = config.master_seed;
    let mut log = RunLog::new();

    let pseudo = pseudo_epoch_with(base, &grouping, q)?;
    log.push(Record::Epoch {
        e: 0,
        role: "pseudo_epoch".into(),
        weights: grouping.expand(&vec![1.0; grouping.effective_len()]),
        losses: pseudo.report.mean.values().to_vec(),
        per_iteration: pseudo.report.per_iteration.clone(),
        score: Some(pseudo.initial_score),
        rng_streams: vec![pseudo.trainee.rng_label().to_string()],
    });

    // All members start from the shared post-warmup state; population
    // diversity comes from the weight candidates and per-member data order.
    let mut members: Vec<T> = (0..config.m)
        .map(|j| {
            let mut member = pseudo.trainee.clone();
            let id = StreamId::MemberData { member: j };
            member.set_data_stream(derive_rng(seed, &id), id.label());
            member
        })
        .collect();
    let member_labels: Vec<String> =
        members.iter().map(|m| m.rng_label().to_string()).collect();

    let params = PolicyParams::init(
        grouping.effective_len(),
        &mut derive_rng(seed, &StreamId::PolicyInit),
    );
    let mut controller = Controller::new(
        params,
        ControllerSettings {
            sigma: config.sigma,
            population: config.m,
            total_checkpoints: config.checkpoints,
            policy_lr: config.policy_lr,
            policy_weight_decay: config.policy_weight_decay,
        },
    );

    let mut candidates = controller.issue_initial(
        &pseudo.initial_state,
        &mut derive_rng(seed, &StreamId::Candidates { t: 1 }),
    )?;
    let mut prev_best = pseudo.initial_score;
    let mut records: Vec<CheckpointRecord> = Vec::with_capacity(config.checkpoints as usize);

    for t in 1..=config.checkpoints {
        let results: Vec<Result<IntervalReport>> = members
            .par_iter_mut()
            .enumerate()
            .map(|(j, member)| member.train_interval(&candidates.applied[j], &grouping, q))
            .collect();
        let mut reports = Vec::with_capacity(config.m);
        for (j, result) in results.into_iter().enumerate() {
            match result {
                Ok(report) => reports.push(report),
                Err(e) => {
                    return Err(Error::Divergence(format!(
                        "member {j} diverged at checkpoint {t} under candidate {:?}: {e}",
                        candidates.applied[j].values()
                    )));
                }
            }
        }

        let scores = ScoreVector::new(members.iter().map(Trainee::evaluate).collect())?;
        let best = argmax(scores.values());
        let l_best = grouping.collapse_losses(&reports[best].mean)?;

        let next_stream = StreamId::Candidates { t: t + 1 };
        let step = controller.checkpoint_step(
            t,
            &l_best,
            &scores,
            prev_best,
            &mut derive_rng(seed, &next_stream),
            next_stream.label(),
        )?;

        let mut rng_streams = member_labels.clone();
        rng_streams.push(next_stream.label());
        log.push(Record::Checkpoint {
            record: Box::new(step.record.clone()),
            rng_streams,
        });
        log.push(Record::PolicyUpdate {
            t,
            rewards: step.record.rewards.clone(),
            grad_norm: step.update.grad_norm,
            params_norm: step.update.params_norm,
            lr: config.policy_lr,
            weight_decay: config.policy_weight_decay,
        });

        let source = members[best].clone();
        for (j, member) in members.iter_mut().enumerate() {
            if j != best {
                member.sync_from(&source)?;
            }
        }
        if let Some(ref mut cb) = observer {
            cb(CheckpointEvent {
                t,
                record: &step.record,
                member_digests: members.iter().map(Trainee::state_digest).collect(),
            });
        }

        prev_best = step.record.best_score;
        candidates = step.next;
        records.push(step.record);
    }

    let last = records.last().expect("at least one checkpoint ran");
    let best_index = last.best_index;
    let best_score = last.best_score;
    let ensemble =
        PolicyEnsemble::from_store(std::mem::take(&mut controller.store), config.gamma)?;
    Ok(ExploreOutcome {
        best: members.swap_remove(best_index),
        best_score,
        ensemble,
        records,
        log,
    })
}

/// One epoch of transfer training.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferEpoch {
    pub e: u32,
    pub lambda_raw: Vec<f64>,
    pub lambda_applied: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub score: f64,
}

pub struct TransferOutcome<T> {
    pub trainee: T,
    pub final_score: f64,
    pub epochs: Vec<TransferEpoch>,
    pub log: RunLog,
}

/// Train a fresh model under the snapshot ensemble: a pseudo epoch for the
/// initial loss state, then per epoch one ensemble prediction and one
/// training interval. The epoch count need not equal the ensemble's
/// checkpoint count.
pub fn transfer_train(
    ensemble: &PolicyEnsemble,
    config: &RunConfig,
    epochs_override: Option<u32>,
) -> Result<TransferOutcome<SyntheticTrainee>> {
    let trainee = make_trainee(&config.trainee, config.master_seed)?;
    transfer_train_with(ensemble, config, trainee, epochs_override)
}

pub fn transfer_train_with<T: Trainee>(
    ensemble: &PolicyEnsemble,
    config: &RunConfig,
    base: T,
    epochs_override: Option<u32>,
) -> Result<TransferOutcome<T>> {
    let config = config.clone().validate()?;
    let grouping = config.grouping();
    if ensemble.input_dim() != grouping.effective_len() {
        return Err(Error::Dimension(format!(
            "loss dimension mismatch: ensemble expects {} losses, run has {} effective losses",
            ensemble.input_dim(),
            grouping.effective_len()
        )));
    }
    let total = epochs_override.unwrap_or(config.transfer_epochs);
    if total == 0 {
        return Err(Error::Config("transfer needs at least one epoch".into()));
    }
    let q = config.interval_iterations();
    let mut log = RunLog::new();

    let pseudo = pseudo_epoch_with(base, &grouping, q)?;
    log.push(Record::Epoch {
        e: 0,
        role: "pseudo_epoch".into(),
        weights: grouping.expand(&vec![1.0; grouping.effective_len()]),
        losses: pseudo.report.mean.values().to_vec(),
        per_iteration: pseudo.report.per_iteration.clone(),
        score: Some(pseudo.initial_score),
        rng_streams: vec![pseudo.trainee.rng_label().to_string()],
    });

    let mut trainee = pseudo.trainee;
    let mut state = pseudo.initial_state;
    let mut epochs = Vec::with_capacity(total as usize);
    let mut final_score = pseudo.initial_score;

    for e in 1..=total {
        let prediction = ensemble.predict(&state, e, total)?;
        let report = trainee.train_interval(&prediction.applied, &grouping, q)?;
        let score = trainee.evaluate();
        let next_state = grouping.collapse_losses(&report.mean)?;
        log.push(Record::TransferStep {
            e,
            loss_state: state.values().to_vec(),
            lambda_raw: prediction.raw.values().to_vec(),
            lambda_applied: prediction.applied.values().to_vec(),
            coefficients: prediction.coefficients.clone(),
            losses: report.mean.values().to_vec(),
            per_iteration: report.per_iteration.clone(),
            score,
            rng_streams: vec![trainee.rng_label().to_string()],
        });
        epochs.push(TransferEpoch {
            e,
            lambda_raw: prediction.raw.values().to_vec(),
            lambda_applied: prediction.applied.values().to_vec(),
            coefficients: prediction.coefficients,
            score,
        });
        state = next_state;
        final_score = score;
    }

    Ok(TransferOutcome {
        trainee,
        final_score,
        epochs,
        log,
    })
}
