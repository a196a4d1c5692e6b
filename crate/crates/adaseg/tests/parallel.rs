//! Loose wall-clock check of the fork-join exploration. Timing-sensitive,
//! so ignored by default; run with `cargo test -- --ignored` on an idle
//! machine.

use std::time::Instant;

use adaseg::orchestrator::explore;
use adaseg::trainee::TraineeSpec;
use adaseg::RunConfig;

fn timed_explore(threads: usize, config: &RunConfig) -> f64 {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap();
    let start = Instant::now();
    pool.install(|| explore(config).unwrap());
    start.elapsed().as_secs_f64()
}

#[test]
#[ignore = "timing-sensitive; run manually on an idle machine"]
fn parallel_exploration_speeds_up() {
    // Inflate the per-interval work so the barrier overhead is negligible.
    let mut spec = TraineeSpec::static_imbalance();
    spec.shared_dim = 64;
    spec.head_dims = vec![16, 16];
    spec.train_samples = 65536;
    spec.val_samples = 4096;
    spec.horizon_steps = 40960;
    let mut config = RunConfig::for_trainee(spec);
    config.m = 8;
    config.checkpoints = 4;

    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let executors = cores.min(4);
    if executors < 2 {
        eprintln!("single-core machine; nothing to measure");
        return;
    }
    let serial = timed_explore(1, &config);
    let parallel = timed_explore(executors, &config);
    let speedup = serial / parallel;
    println!(
        "serial {serial:.2}s, {executors} executors {parallel:.2}s, speedup {speedup:.2}x"
    );
    // Loose bound: memory-bound trainees cannot reach the core count.
    let expected = if executors >= 4 { 1.5 } else { 1.2 };
    assert!(
        speedup > expected,
        "expected >{expected}x speedup with {executors} executors, got {speedup:.2}x"
    );
}

/// Results are identical regardless of executor count.
#[test]
fn executor_count_does_not_change_results() {
    let mut config = RunConfig::for_trainee(TraineeSpec::static_imbalance());
    config.m = 4;
    config.checkpoints = 2;
    config.master_seed = 3;
    let one = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| explore(&config).unwrap());
    let four = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap()
        .install(|| explore(&config).unwrap());
    assert_eq!(one.log.to_jsonl(), four.log.to_jsonl());
}
