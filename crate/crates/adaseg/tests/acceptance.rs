//! Acceptance gate: every criterion as one test, each printing a pass/fail
//! line. Exact-math checks run at fixed tolerances; the behavioral analogs
//! run the shipped synthetic tasks against their committed oracle fixtures.

use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use adaseg::baselines::{
    oracle_certify, run_pbt_like, run_uniform, FixtureRecord,
};
use adaseg::ensemble::{ensemble_coefficients, PolicyEnsemble};
use adaseg::logging::RunLog;
use adaseg::orchestrator::{explore, transfer_train};
use adaseg::policy::{
    log_density_unnormalized, reinforce_gradient, PolicyParams, PolicySnapshot,
};
use adaseg::report::median;
use adaseg::rewards::{combined_reward, local_reward, mean_and_population_std};
use adaseg::rng::{derive_rng, RunRng, StreamId};
use adaseg::trainee::{TaskKind, TraineeSpec};
use adaseg::types::LOSS_FLOOR;
use adaseg::{LossVector, RunConfig, ScoreVector, WeightVector};

fn verdict(criterion: &str, pass: bool, detail: &str) {
    println!(
        "acceptance {criterion}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "{criterion} failed: {detail}");
}

fn acceptance_seeds() -> [u64; 5] {
    [1, 2, 3, 4, 5]
}

fn fixture(kind: &str) -> FixtureRecord {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(format!("{kind}.json"));
    let text = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("cannot read fixture {}: {e}", path.display()));
    serde_json::from_str(&text).expect("fixture parses")
}

/// Random policy/loss instance with pre-activation margins away from the
/// rectifier kink, where the map is not differentiable.
fn fd_instance(n: usize, rng: &mut RunRng) -> (PolicyParams, LossVector) {
    loop {
        let mut params = PolicyParams::init(n, rng);
        for layer in &mut params.layers {
            for w in &mut layer.weight {
                let z: f64 = StandardNormal.sample(rng);
                *w += 0.05 * z;
            }
            for b in &mut layer.bias {
                let z: f64 = StandardNormal.sample(rng);
                *b += 0.02 * z;
            }
        }
        let losses: Vec<f64> = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                0.05 + 1.5 * z.abs()
            })
            .collect();
        let eta = params.forward(&losses).unwrap();
        if !eta.iter().all(|v| v.is_finite()) {
            continue;
        }
        // Margin probe: nudging every parameter by the FD step must not
        // cross a rectifier kink, so require a healthy pre-activation gap.
        let l1 = params.layers[0].apply(&losses);
        let h1: Vec<f64> = l1.iter().map(|v| v.max(0.0)).collect();
        let l2 = params.layers[1].apply(&h1);
        let margin = l1
            .iter()
            .chain(l2.iter())
            .map(|z| z.abs())
            .fold(f64::INFINITY, f64::min);
        if margin > 1e-3 {
            return (params, LossVector::new(losses).unwrap());
        }
    }
}

#[test]
fn criterion_01_reinforce_gradient_matches_finite_differences() {
    let start = Instant::now();
    let sigma = 0.2;
    let h = 1e-5;
    let mut rng = derive_rng(0xACC1, &StreamId::PolicyInit);
    let mut worst: f64 = 0.0;

    for case in 0..100 {
        let n = if case % 2 == 0 { 2 } else { 10 };
        let m = if (case / 2) % 2 == 0 { 2 } else { 8 };
        let (params, losses) = fd_instance(n, &mut rng);
        let mu = params.weights_from_losses(&losses).unwrap();
        let samples: Vec<WeightVector> = (0..m)
            .map(|_| {
                WeightVector::new(
                    mu.values()
                        .iter()
                        .map(|v| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            v + sigma * z
                        })
                        .collect(),
                )
                .unwrap()
            })
            .collect();
        let rewards: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();

        let analytic = reinforce_gradient(&params, &losses, &samples, &rewards, sigma).unwrap();

        // Fixed-sample surrogate: R(theta) = (1/m) sum_j r_j log s(...).
        let surrogate = |p: &PolicyParams| -> f64 {
            let mu = p.weights_from_losses(&losses).unwrap();
            samples
                .iter()
                .zip(&rewards)
                .map(|(s, r)| r * log_density_unnormalized(s.values(), mu.values(), sigma))
                .sum::<f64>()
                / m as f64
        };

        let mut num = 0.0;
        let mut denom = 0.0;
        for layer_idx in 0..3 {
            let entries = params.layers[layer_idx].weight.len();
            for entry in 0..entries + params.layers[layer_idx].bias.len() {
                let mut hi = params.clone();
                let mut lo = params.clone();
                let analytic_value = if entry < entries {
                    hi.layers[layer_idx].weight[entry] += h;
                    lo.layers[layer_idx].weight[entry] -= h;
                    analytic.layers[layer_idx].weight[entry]
                } else {
                    hi.layers[layer_idx].bias[entry - entries] += h;
                    lo.layers[layer_idx].bias[entry - entries] -= h;
                    analytic.layers[layer_idx].bias[entry - entries]
                };
                let fd = (surrogate(&hi) - surrogate(&lo)) / (2.0 * h);
                num += (fd - analytic_value) * (fd - analytic_value);
                denom += analytic_value * analytic_value;
            }
        }
        let rel = (num / denom.max(1e-24)).sqrt();
        worst = worst.max(rel);
    }

    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        "criterion 01 (reinforce gradient vs finite differences)",
        worst < 1e-4 && elapsed < 10.0,
        &format!("worst rel err {worst:.2e} over 100 instances in {elapsed:.1}s"),
    );
}

#[test]
fn criterion_02_reward_normalization() {
    let mut rng = derive_rng(0xACC2, &StreamId::PolicyInit);
    let mut worst_mean: f64 = 0.0;
    let mut worst_std: f64 = 0.0;
    for _ in 0..1000 {
        let m = 2 + rng.random_range(0..15);
        let values: Vec<f64> = (0..m)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                40.0 + 5.0 * z
            })
            .collect();
        let scores = ScoreVector::new(values).unwrap();
        let (_, std) = mean_and_population_std(scores.values());
        if std < 1e-9 {
            continue;
        }
        let r = local_reward(&scores);
        let (mean, std) = mean_and_population_std(&r);
        worst_mean = worst_mean.max(mean.abs());
        worst_std = worst_std.max((std - 1.0).abs());
    }

    let degenerate = local_reward(&ScoreVector::new(vec![7.25; 6]).unwrap());
    let degenerate_ok = degenerate.iter().all(|v| *v == 0.0);

    let combined = combined_reward(
        &ScoreVector::new(vec![40.0, 43.0, 41.0]).unwrap(),
        39.0,
        3,
        8,
        &[true, false, true],
    );
    let penalty_ok = combined.values[1] == -1.0;

    verdict(
        "criterion 02 (reward normalization)",
        worst_mean < 1e-9 && worst_std < 1e-9 && degenerate_ok && penalty_ok,
        &format!("worst |mean| {worst_mean:.2e}, worst |std-1| {worst_std:.2e}"),
    );
}

#[test]
fn criterion_03_ensemble_coefficient_mechanics() {
    let mut worst: f64 = 0.0;
    for checkpoints in 1..=50u32 {
        for total in 1..=50u32 {
            for e in 1..=total {
                let c = ensemble_coefficients(e, total, checkpoints, 0.9);
                let sum: f64 = c.iter().sum();
                worst = worst.max((sum - 1.0).abs());
            }
        }
    }

    // A single snapshot reduces transfer to that policy's own prediction.
    let params = PolicyParams::init(3, &mut derive_rng(0xACC3, &StreamId::PolicyInit));
    let single = PolicyEnsemble::new(
        vec![PolicySnapshot {
            t: 1,
            params: params.clone(),
            rng_id: "candidates/t=1".into(),
        }],
        0.9,
    )
    .unwrap();
    let losses = LossVector::new(vec![0.7, 1.3, 2.0]).unwrap();
    let direct = params.weights_from_losses(&losses).unwrap();
    let mut single_ok = true;
    for e in 1..=6 {
        let p = single.predict(&losses, e, 6).unwrap();
        single_ok &= p
            .raw
            .values()
            .iter()
            .zip(direct.values())
            .all(|(a, b)| (a - b).abs() < 1e-15);
    }

    let hand = ensemble_coefficients(1, 2, 2, 0.9);
    let hand_ok =
        (hand[0] - 1.0 / 1.9).abs() < 1e-12 && (hand[1] - 0.9 / 1.9).abs() < 1e-12;

    verdict(
        "criterion 03 (ensemble coefficient mechanics)",
        worst < 1e-12 && single_ok && hand_ok,
        &format!("worst |sum-1| {worst:.2e} over T,E in 1..=50"),
    );
}

#[test]
fn criterion_04_weight_recovery_round_trip() {
    let mut rng = derive_rng(0xACC4, &StreamId::PolicyInit);
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let n = 2 + case % 9;
        let params = PolicyParams::init(n, &mut rng);
        let losses: Vec<f64> = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (z.abs() * 2.0) * if case % 7 == 0 { 1e-9 } else { 1.0 }
            })
            .collect();
        let lv = LossVector::new(losses.clone()).unwrap();
        let eta = params.forward(&losses).unwrap();
        let lambda = params.weights_from_losses(&lv).unwrap();
        for i in 0..n {
            let back = lambda.values()[i] * losses[i].max(LOSS_FLOOR);
            let rel = (back - eta[i]).abs() / eta[i].abs().max(1.0);
            worst = worst.max(rel);
        }
    }
    verdict(
        "criterion 04 (weight recovery round trip)",
        worst < 1e-14,
        &format!("worst rel err {worst:.2e} over 1000 instances"),
    );
}

#[test]
fn criterion_05_seeded_runs_replay_byte_identically() {
    let start = Instant::now();
    let mut config = RunConfig::default_grouped_ten_loss();
    config.master_seed = 7;

    let a = explore(&config).unwrap();
    let b = explore(&config).unwrap();
    let explore_ok = a.log.to_jsonl() == b.log.to_jsonl();

    let ta = transfer_train(&a.ensemble, &config, None).unwrap();
    let tb = transfer_train(&a.ensemble, &config, None).unwrap();
    let transfer_ok = ta.log.to_jsonl() == tb.log.to_jsonl();

    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        "criterion 05 (byte-identical seeded replays)",
        explore_ok && transfer_ok && elapsed < 120.0,
        &format!(
            "explore {} bytes, transfer {} bytes, {elapsed:.1}s",
            a.log.to_jsonl().len(),
            ta.log.to_jsonl().len()
        ),
    );
}

#[test]
fn criterion_06_static_imbalance_comparison() {
    let start = Instant::now();
    let fixture = fixture("static-imbalance");
    let base = RunConfig::for_task_kind(TaskKind::StaticImbalance);
    assert_eq!(fixture.spec, base.trainee, "fixture spec drifted");

    let mut uniform = Vec::new();
    let mut explore_best = Vec::new();
    let mut transfer = Vec::new();
    let mut pbt = Vec::new();
    for seed in acceptance_seeds() {
        let mut config = base.clone();
        config.master_seed = seed;
        uniform.push(run_uniform(&config, None).unwrap().final_score);
        let outcome = explore(&config).unwrap();
        explore_best.push(outcome.best_score);
        transfer.push(
            transfer_train(&outcome.ensemble, &config, None)
                .unwrap()
                .final_score,
        );
        pbt.push(run_pbt_like(&config, 1.25).unwrap().final_score);
    }
    let med_uniform = median(&uniform);
    let med_explore = median(&explore_best);
    let med_transfer = median(&transfer);
    let med_pbt = median(&pbt);

    let beats_uniform = med_transfer > med_uniform;
    let closure_threshold = fixture.uniform_score + 0.5 * fixture.static_gap;
    let closes_gap = med_transfer >= closure_threshold;
    let beats_pbt = med_explore > med_pbt;
    let elapsed = start.elapsed().as_secs_f64();

    verdict(
        "criterion 06 (static-imbalance comparison)",
        beats_uniform && closes_gap && beats_pbt && elapsed < 600.0,
        &format!(
            "uniform {med_uniform:.2}, transfer {med_transfer:.2} (needs > uniform and >= {closure_threshold:.2}), explore {med_explore:.2} vs population baseline {med_pbt:.2}, {elapsed:.0}s"
        ),
    );
}

#[test]
fn criterion_07_dynamic_phase_comparison() {
    let fixture = fixture("dynamic-phase");
    let base = RunConfig::for_task_kind(TaskKind::DynamicPhase);
    assert_eq!(fixture.spec, base.trainee, "fixture spec drifted");

    let mut comb = Vec::new();
    let mut single = Vec::new();
    for seed in acceptance_seeds() {
        let mut config = base.clone();
        config.master_seed = seed;
        let outcome = explore(&config).unwrap();
        comb.push(
            transfer_train(&outcome.ensemble, &config, None)
                .unwrap()
                .final_score,
        );
        single.push(
            transfer_train(&outcome.ensemble.final_snapshot_only(), &config, None)
                .unwrap()
                .final_score,
        );
    }
    let med_comb = median(&comb);
    let med_single = median(&single);

    let beats_static = med_comb >= fixture.best_static_score;
    let near_single = med_comb >= med_single - 0.1;
    let beats_single = med_comb > med_single;

    verdict(
        "criterion 07 (dynamic-phase ensemble transfer)",
        beats_static && near_single && beats_single,
        &format!(
            "combined {med_comb:.2} vs best static {:.2} and single-snapshot {med_single:.2}",
            fixture.best_static_score
        ),
    );
}

#[test]
fn criterion_08_policy_transfer_across_tasks_and_schedules() {
    let base = RunConfig::for_task_kind(TaskKind::StaticImbalance);
    let mut prime_uniform = Vec::new();
    let mut prime_transfer = Vec::new();
    let mut long_uniform = Vec::new();
    let mut long_transfer = Vec::new();
    for seed in acceptance_seeds() {
        let mut config = base.clone();
        config.master_seed = seed;
        let outcome = explore(&config).unwrap();

        // Rescaled task variant.
        let mut prime = RunConfig::for_trainee(config.trainee.rescaled(&[2.0, 0.6]).unwrap());
        prime.master_seed = seed;
        prime_uniform.push(run_uniform(&prime, None).unwrap().final_score);
        prime_transfer.push(
            transfer_train(&outcome.ensemble, &prime, None)
                .unwrap()
                .final_score,
        );

        // Doubled schedule: E = 2T with the matching uniform budget.
        let doubled = 2 * config.checkpoints;
        long_uniform.push(
            run_uniform(&config, Some(doubled + 1))
                .unwrap()
                .final_score,
        );
        long_transfer.push(
            transfer_train(&outcome.ensemble, &config, Some(doubled))
                .unwrap()
                .final_score,
        );
    }
    let prime_ok = median(&prime_transfer) > median(&prime_uniform);
    let long_ok = median(&long_transfer) > median(&long_uniform);
    verdict(
        "criterion 08 (transfer to rescaled task and doubled schedule)",
        prime_ok && long_ok,
        &format!(
            "rescaled: transfer {:.2} vs uniform {:.2}; doubled: transfer {:.2} vs uniform {:.2}",
            median(&prime_transfer),
            median(&prime_uniform),
            median(&long_transfer),
            median(&long_uniform)
        ),
    );
}

#[test]
fn criterion_09_trainee_mechanics() {
    use adaseg::config::LossGrouping;
    use adaseg::trainee::{make_trainee, Trainee};

    // Heads-only toy: the 1/lambda rescale cancels weights exactly.
    let spec = TraineeSpec {
        shared_dim: 0,
        ..TraineeSpec::static_imbalance()
    };
    let grouping = LossGrouping::singletons(2);
    let mut weighted = make_trainee(&spec, 3).unwrap();
    let mut plain = make_trainee(&spec, 3).unwrap();
    for _ in 0..4 {
        weighted
            .train_interval(&WeightVector::new(vec![2.9, 0.04]).unwrap(), &grouping, 16)
            .unwrap();
        plain
            .train_interval(&WeightVector::uniform(2), &grouping, 16)
            .unwrap();
    }
    let mut worst: f64 = 0.0;
    for (a, b) in weighted.heads().iter().flatten().zip(plain.heads().iter().flatten()) {
        worst = worst.max((a - b).abs());
    }
    let rescale_ok = worst <= 1e-10;

    // All-ones weights reproduce the unweighted baseline exactly: transfer
    // under an identity ensemble equals the uniform run.
    // One identity snapshot: its coefficient is exactly 1, so the ensemble
    // emits exactly unit weights.
    let config = RunConfig::for_task_kind(TaskKind::StaticImbalance);
    let identity = PolicyEnsemble::new(
        vec![PolicySnapshot {
            t: 1,
            params: PolicyParams::identity(2),
            rng_id: "candidates/t=1".into(),
        }],
        0.9,
    )
    .unwrap();
    let via_ensemble = transfer_train(&identity, &config, None).unwrap();
    let uniform = run_uniform(&config, Some(config.transfer_epochs + 1)).unwrap();
    let identity_ok = via_ensemble.final_score == uniform.final_score
        && via_ensemble
            .epochs
            .iter()
            .map(|e| e.score)
            .zip(uniform.per_epoch_scores.iter().skip(1))
            .all(|(a, b)| a == *b);

    verdict(
        "criterion 09 (trainee mechanics)",
        rescale_ok && identity_ok,
        &format!("head divergence {worst:.2e}; identity transfer equals uniform: {identity_ok}"),
    );
}

#[test]
fn criterion_10_oracle_fixtures_certify_and_replay() {
    let static_fixture = fixture("static-imbalance");
    let dynamic_fixture = fixture("dynamic-phase");

    let static_record =
        oracle_certify(&RunConfig::for_task_kind(TaskKind::StaticImbalance)).unwrap();
    let dynamic_record =
        oracle_certify(&RunConfig::for_task_kind(TaskKind::DynamicPhase)).unwrap();

    let static_ok = static_record.static_gap >= 2.0 && static_record == static_fixture;
    let dynamic_ok = dynamic_record.dynamic_gap.unwrap_or(0.0) >= 2.0
        && dynamic_record == dynamic_fixture;

    // Byte-level replay of the committed fixtures.
    let bytes_ok = {
        let static_bytes = serde_json::to_string_pretty(&static_record).unwrap();
        let committed = std::fs::read_to_string(
            Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/static-imbalance.json"),
        )
        .unwrap();
        static_bytes == committed
    };

    verdict(
        "criterion 10 (oracle fixtures certify and replay)",
        static_ok && dynamic_ok && bytes_ok,
        &format!(
            "static gap {:+.2}, dynamic gap {:+.2}, byte replay {bytes_ok}",
            static_record.static_gap,
            dynamic_record.dynamic_gap.unwrap_or(f64::NAN)
        ),
    );
}

/// Exploration log structure: T checkpoints, T policy updates, and the
/// snapshot archive indices 1..=T.
#[test]
fn exploration_accounting_invariants() {
    let mut config = RunConfig::for_task_kind(TaskKind::StaticImbalance);
    config.master_seed = 11;
    let outcome = explore(&config).unwrap();
    let text = outcome.log.to_jsonl();
    let parsed = RunLog::parse(&text).unwrap();
    assert_eq!(parsed, outcome.log);

    let checkpoints = outcome
        .records
        .iter()
        .map(|r| r.t)
        .collect::<Vec<_>>();
    assert_eq!(checkpoints, (1..=config.checkpoints).collect::<Vec<_>>());
    assert_eq!(outcome.ensemble.len() as u32, config.checkpoints);
}
