//! Reference tuners: the uniform baseline, coarse grid search over static
//! weights, a controller-free population baseline, random search, and the
//! brute-force oracle that certifies the synthetic tasks can tell tuning
//! methods apart.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::logging::{Record, RunLog};
use crate::rng::{derive_rng, StreamId};
use crate::trainee::{make_trainee, IntervalReport, TaskKind, Trainee, TraineeSpec};
use crate::types::{argmax, LossVector, ScoreVector, WeightVector, WEIGHT_FLOOR};

/// Version tag embedded in oracle fixtures; bump when the oracle procedure
/// changes.
pub const ORACLE_VERSION: &str = "1";

/// A single-model training run under an epoch-indexed weight schedule.
#[derive(Debug, Clone)]
pub struct SingleRunOutcome {
    pub final_score: f64,
    pub per_epoch_scores: Vec<f64>,
    pub weights_per_epoch: Vec<Vec<f64>>,
    pub final_losses: LossVector,
    pub log: RunLog,
}

/// Total epochs used when the caller does not override: the transfer budget
/// plus its pseudo epoch, so static baselines train exactly as long as the
/// adaptive runs.
pub fn default_total_epochs(config: &RunConfig) -> u32 {
    config.transfer_epochs + 1
}

/// Run one trainee for `epochs` epochs, weights chosen per epoch by
/// `schedule` (1-based epoch index, per-group weights). Shares the seed and
/// data discipline of the adaptive runs, so score differences are down to
/// the weights alone.
pub fn run_schedule(
    config: &RunConfig,
    epochs: u32,
    role: &str,
    schedule: impl Fn(u32) -> Vec<f64>,
) -> Result<SingleRunOutcome> {
    let config = config.clone().validate()?;
    if epochs == 0 {
        return Err(Error::Config("a run needs at least one epoch".into()));
    }
    let grouping = config.grouping();
    let q = config.interval_iterations();
    let mut trainee = make_trainee(&config.trainee, config.master_seed)?;
    let mut log = RunLog::new();
    let mut per_epoch_scores = Vec::with_capacity(epochs as usize);
    let mut weights_per_epoch = Vec::with_capacity(epochs as usize);
    let mut final_losses: Option<IntervalReport> = None;

    for e in 1..=epochs {
        let weights = schedule(e);
        if weights.len() != grouping.effective_len() {
            return Err(Error::Dimension(format!(
                "schedule produced {} weights for {} effective losses",
                weights.len(),
                grouping.effective_len()
            )));
        }
        let applied = WeightVector::new(weights)?.floored(WEIGHT_FLOOR);
        let report = trainee.train_interval(&applied, &grouping, q)?;
        let score = trainee.evaluate();
        log.push(Record::Epoch {
            e,
            role: role.to_string(),
            weights: grouping.expand(applied.values()),
            losses: report.mean.values().to_vec(),
            per_iteration: report.per_iteration.clone(),
            score: Some(score),
            rng_streams: vec![trainee.rng_label().to_string()],
        });
        per_epoch_scores.push(score);
        weights_per_epoch.push(applied.values().to_vec());
        final_losses = Some(report);
    }

    let final_losses = final_losses.expect("at least one epoch ran").mean;
    Ok(SingleRunOutcome {
        final_score: *per_epoch_scores.last().expect("nonempty"),
        per_epoch_scores,
        weights_per_epoch,
        final_losses,
        log,
    })
}

/// Fixed static weights for every epoch.
pub fn run_static(
    config: &RunConfig,
    weights: &[f64],
    epochs: Option<u32>,
    role: &str,
) -> Result<SingleRunOutcome> {
    let total = epochs.unwrap_or_else(|| default_total_epochs(config));
    let w = weights.to_vec();
    run_schedule(config, total, role, move |_| w.clone())
}

/// The vanilla baseline: every weight equal to 1 throughout.
pub fn run_uniform(config: &RunConfig, epochs: Option<u32>) -> Result<SingleRunOutcome> {
    let n = config.grouping().effective_len();
    run_static(config, &vec![1.0; n], epochs, "uniform")
}

/// Piecewise-constant two-phase schedule: `first` before `switch_epoch`,
/// `second` from it onward.
pub fn run_two_phase(
    config: &RunConfig,
    first: &[f64],
    second: &[f64],
    switch_epoch: u32,
    epochs: Option<u32>,
) -> Result<SingleRunOutcome> {
    let total = epochs.unwrap_or_else(|| default_total_epochs(config));
    let (a, b) = (first.to_vec(), second.to_vec());
    run_schedule(config, total, "two-phase", move |e| {
        if e < switch_epoch {
            a.clone()
        } else {
            b.clone()
        }
    })
}

/// Outcome of a grid search over static group weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridOutcome {
    pub best_weights: Vec<f64>,
    pub best_score: f64,
    /// Every lattice point with its final score, in lattice order.
    pub table: Vec<(Vec<f64>, f64)>,
}

fn cartesian_power(axis: &[f64], dims: usize) -> Vec<Vec<f64>> {
    let mut points: Vec<Vec<f64>> = vec![Vec::new()];
    for _ in 0..dims {
        let mut next = Vec::with_capacity(points.len() * axis.len());
        for p in &points {
            for v in axis {
                let mut q = p.clone();
                q.push(*v);
                next.push(q);
            }
        }
        points = next;
    }
    points
}

/// Coarse grid search: one full training run per lattice point over the
/// grouped weights.
pub fn run_grid(config: &RunConfig, axis: &[f64], epochs: Option<u32>) -> Result<GridOutcome> {
    if axis.is_empty() {
        return Err(Error::Config("grid axis must not be empty".into()));
    }
    let dims = config.grouping().effective_len();
    let points = cartesian_power(axis, dims);
    let results: Vec<Result<f64>> = points
        .par_iter()
        .map(|w| run_static(config, w, epochs, "grid").map(|r| r.final_score))
        .collect();
    let mut table = Vec::with_capacity(points.len());
    for (point, result) in points.into_iter().zip(results) {
        table.push((point, result?));
    }
    let scores: Vec<f64> = table.iter().map(|(_, s)| *s).collect();
    let best = argmax(&scores);
    Ok(GridOutcome {
        best_weights: table[best].0.clone(),
        best_score: table[best].1,
        table,
    })
}

/// Outcome of the controller-free population baseline.
#[derive(Debug, Clone)]
pub struct PbtOutcome {
    pub final_score: f64,
    pub best_scores: Vec<f64>,
    pub final_weights: Vec<f64>,
    pub log: RunLog,
}

/// Population-based tuning without a controller: per checkpoint each member
/// multiplies every weight by a factor drawn from {1/jitter, jitter}, trains,
/// and the best member's model and weights are broadcast to everyone.
pub fn run_pbt_like(config: &RunConfig, jitter: f64) -> Result<PbtOutcome> {
    let config = config.clone().validate()?;
    if !jitter.is_finite() || jitter < 1.0 {
        return Err(Error::Config("jitter must be at least 1.0".into()));
    }
    let grouping = config.grouping();
    let q = config.interval_iterations();
    let seed = config.master_seed;
    let mut log = RunLog::new();

    let base = make_trainee(&config.trainee, seed)?;
    let pseudo = crate::orchestrator::pseudo_epoch_with(base, &grouping, q)?;
    log.push(Record::Epoch {
        e: 0,
        role: "pseudo_epoch".into(),
        weights: grouping.expand(&vec![1.0; grouping.effective_len()]),
        losses: pseudo.report.mean.values().to_vec(),
        per_iteration: pseudo.report.per_iteration.clone(),
        score: Some(pseudo.initial_score),
        rng_streams: vec![pseudo.trainee.rng_label().to_string()],
    });

    let mut members: Vec<_> = (0..config.m)
        .map(|j| {
            let mut member = pseudo.trainee.clone();
            let id = StreamId::MemberData { member: j };
            member.set_data_stream(derive_rng(seed, &id), id.label());
            member
        })
        .collect();
    let mut weights: Vec<Vec<f64>> = vec![vec![1.0; grouping.effective_len()]; config.m];
    let mut best_scores = Vec::with_capacity(config.checkpoints as usize);

    for t in 1..=config.checkpoints {
        // Explore: jitter every member's weights, then train.
        let mut perturb_rng = derive_rng(seed, &StreamId::Perturb { t });
        for w in weights.iter_mut() {
            for v in w.iter_mut() {
                let factor = if perturb_rng.random_range(0..2) == 0 {
                    1.0 / jitter
                } else {
                    jitter
                };
                *v = (*v * factor).max(WEIGHT_FLOOR);
            }
        }
        let applied: Vec<WeightVector> = weights
            .iter()
            .map(|w| WeightVector::new(w.clone()).expect("finite weights"))
            .collect();
        let results: Vec<Result<IntervalReport>> = members
            .par_iter_mut()
            .enumerate()
            .map(|(j, member)| member.train_interval(&applied[j], &grouping, q))
            .collect();
        let mut reports = Vec::with_capacity(config.m);
        for (j, result) in results.into_iter().enumerate() {
            reports.push(result.map_err(|e| {
                Error::Divergence(format!("population member {j} diverged at {t}: {e}"))
            })?);
        }

        // Exploit: broadcast the best member's model and weights.
        let scores = ScoreVector::new(members.iter().map(Trainee::evaluate).collect())?;
        let best = argmax(scores.values());
        let source = members[best].clone();
        for (j, member) in members.iter_mut().enumerate() {
            if j != best {
                member.sync_from(&source)?;
            }
            log.push(Record::Epoch {
                e: t,
                role: format!("pbt/member/{j}"),
                weights: grouping.expand(&weights[j]),
                losses: reports[j].mean.values().to_vec(),
                per_iteration: Vec::new(),
                score: Some(scores.values()[j]),
                rng_streams: vec![member.rng_label().to_string()],
            });
        }
        let best_weights = weights[best].clone();
        weights = vec![best_weights; config.m];
        best_scores.push(scores.values()[best]);
    }

    Ok(PbtOutcome {
        final_score: *best_scores.last().expect("at least one checkpoint"),
        best_scores,
        final_weights: weights[0].clone(),
        log,
    })
}

/// Outcome of random search over static weights.
#[derive(Debug, Clone)]
pub struct RandomOutcome {
    pub best_weights: Vec<f64>,
    pub best_score: f64,
    pub runs: Vec<(Vec<f64>, f64)>,
}

/// Random search: `budget` static weight vectors drawn log-uniformly from
/// `range`, one full run each. Draws come from a single stream, so a larger
/// budget extends a smaller one.
pub fn run_random(
    config: &RunConfig,
    budget: u32,
    range: (f64, f64),
    epochs: Option<u32>,
) -> Result<RandomOutcome> {
    if budget == 0 {
        return Err(Error::Config("random search needs a positive budget".into()));
    }
    let (lo, hi) = range;
    if !lo.is_finite() || !hi.is_finite() || lo <= 0.0 || hi < lo {
        return Err(Error::Config("random range must satisfy 0 < lo <= hi".into()));
    }
    let dims = config.grouping().effective_len();
    let mut rng = derive_rng(config.master_seed, &StreamId::RandomWeights);
    let draws: Vec<Vec<f64>> = (0..budget)
        .map(|_| {
            (0..dims)
                .map(|_| {
                    if lo == hi {
                        lo
                    } else {
                        let u: f64 = rng.random_range(lo.ln()..hi.ln());
                        u.exp()
                    }
                })
                .collect()
        })
        .collect();
    let results: Vec<Result<f64>> = draws
        .par_iter()
        .map(|w| run_static(config, w, epochs, "random").map(|r| r.final_score))
        .collect();
    let mut runs = Vec::with_capacity(draws.len());
    for (w, result) in draws.into_iter().zip(results) {
        runs.push((w, result?));
    }
    let scores: Vec<f64> = runs.iter().map(|(_, s)| *s).collect();
    let best = argmax(&scores);
    Ok(RandomOutcome {
        best_weights: runs[best].0.clone(),
        best_score: runs[best].1,
        runs,
    })
}

/// Best two-phase schedule found by the oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicBest {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub switch_epoch: u32,
    pub score: f64,
}

/// Oracle certificate for one synthetic task: brute-force sweeps over static
/// (and, for the phase task, two-phase) weightings averaged over the given
/// seeds, plus the admissibility gaps they establish.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub oracle_version: String,
    pub spec: TraineeSpec,
    pub loss_groups: Vec<Vec<usize>>,
    pub seeds: Vec<u64>,
    pub epochs: u32,
    pub static_axis: Vec<f64>,
    pub uniform_score: f64,
    pub best_static_weights: Vec<f64>,
    pub best_static_score: f64,
    pub static_gap: f64,
    pub dynamic_axis: Vec<f64>,
    pub best_dynamic: Option<DynamicBest>,
    pub dynamic_gap: Option<f64>,
    /// Full static table: lattice point, mean score over seeds.
    pub static_table: Vec<(Vec<f64>, f64)>,
}

/// Seeds the oracle averages over.
pub const ORACLE_SEEDS: [u64; 3] = [0, 1, 2];
/// Static lattice per group weight.
pub const ORACLE_STATIC_AXIS: [f64; 5] = [0.05, 0.2, 1.0, 5.0, 20.0];
/// Coarser per-phase lattice for the two-phase sweep.
pub const ORACLE_DYNAMIC_AXIS: [f64; 3] = [0.05, 1.0, 3.0];
/// Required admissibility margin, in score points.
pub const ADMISSIBILITY_GAP: f64 = 2.0;

fn mean_over_seeds(
    config: &RunConfig,
    run: impl Fn(&RunConfig) -> Result<f64> + Sync,
) -> Result<f64> {
    let scores: Vec<Result<f64>> = ORACLE_SEEDS
        .par_iter()
        .map(|seed| {
            let mut c = config.clone();
            c.master_seed = *seed;
            run(&c)
        })
        .collect();
    let mut total = 0.0;
    for s in scores {
        total += s?;
    }
    Ok(total / ORACLE_SEEDS.len() as f64)
}

/// The epoch at which the oracle's two-phase schedules switch: the task's
/// phase boundary expressed in epochs (1-based, first epoch of the second
/// phase).
pub fn phase_switch_epoch(spec: &TraineeSpec) -> u32 {
    let q = u64::from(spec.epoch_iterations());
    let switch = spec.phase_switch_step.unwrap_or(0);
    (switch / q) as u32 + 1
}

/// Certify a shipped task: sweep static weightings (and two-phase schedules
/// for the dynamic task), write the results to a fixture record and check
/// the admissibility gaps. Fails loudly when a task cannot distinguish
/// tuning methods.
pub fn oracle_certify(config: &RunConfig) -> Result<FixtureRecord> {
    let config = config.clone().validate()?;
    let spec = &config.trainee;
    let grouping = config.grouping();
    let dims = grouping.effective_len();
    let epochs = default_total_epochs(&config);

    let uniform_score = mean_over_seeds(&config, |c| {
        run_uniform(c, Some(epochs)).map(|r| r.final_score)
    })?;

    let static_points = cartesian_power(&ORACLE_STATIC_AXIS, dims);
    let mut static_table = Vec::with_capacity(static_points.len());
    for point in &static_points {
        let score = mean_over_seeds(&config, |c| {
            run_static(c, point, Some(epochs), "oracle-static").map(|r| r.final_score)
        })?;
        static_table.push((point.clone(), score));
    }
    let static_scores: Vec<f64> = static_table.iter().map(|(_, s)| *s).collect();
    let best = argmax(&static_scores);
    let best_static_weights = static_table[best].0.clone();
    let best_static_score = static_table[best].1;
    let static_gap = best_static_score - uniform_score;

    let (best_dynamic, dynamic_gap) = if spec.task_kind == TaskKind::DynamicPhase {
        let switch_epoch = phase_switch_epoch(spec);
        let phase_points = cartesian_power(&ORACLE_DYNAMIC_AXIS, dims);
        let mut best: Option<DynamicBest> = None;
        for first in &phase_points {
            for second in &phase_points {
                let score = mean_over_seeds(&config, |c| {
                    run_two_phase(c, first, second, switch_epoch, Some(epochs))
                        .map(|r| r.final_score)
                })?;
                if best.as_ref().map(|b| score > b.score).unwrap_or(true) {
                    best = Some(DynamicBest {
                        first: first.clone(),
                        second: second.clone(),
                        switch_epoch,
                        score,
                    });
                }
            }
        }
        let best = best.expect("dynamic sweep is nonempty");
        let gap = best.score - best_static_score;
        (Some(best), Some(gap))
    } else {
        (None, None)
    };

    let record = FixtureRecord {
        oracle_version: ORACLE_VERSION.to_string(),
        spec: spec.clone(),
        loss_groups: grouping.groups().to_vec(),
        seeds: ORACLE_SEEDS.to_vec(),
        epochs,
        static_axis: ORACLE_STATIC_AXIS.to_vec(),
        uniform_score,
        best_static_weights,
        best_static_score,
        static_gap,
        dynamic_axis: ORACLE_DYNAMIC_AXIS.to_vec(),
        best_dynamic,
        dynamic_gap,
        static_table,
    };

    match spec.task_kind {
        TaskKind::StaticImbalance | TaskKind::GroupedTenLoss => {
            if record.static_gap < ADMISSIBILITY_GAP {
                return Err(Error::Config(format!(
                    "task {} is inadmissible: best static beats uniform by only {:.2} points (need {ADMISSIBILITY_GAP}); retune the task constants",
                    spec.task_kind.as_str(),
                    record.static_gap
                )));
            }
        }
        TaskKind::DynamicPhase => {
            let gap = record.dynamic_gap.expect("dynamic sweep ran");
            if gap < ADMISSIBILITY_GAP {
                return Err(Error::Config(format!(
                    "task {} is inadmissible: best dynamic beats best static by only {gap:.2} points (need {ADMISSIBILITY_GAP}); retune the task constants",
                    spec.task_kind.as_str()
                )));
            }
        }
    }

    Ok(record)
}
