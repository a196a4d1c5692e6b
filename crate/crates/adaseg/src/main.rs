//! Command-line entry point: run exploration, transfer, baselines, oracle
//! certification and comparison reports from a JSON config.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use adaseg::artifacts::{
    summarize_epoch_run, summarize_explore, summarize_transfer, write_run_dir,
};
use adaseg::baselines::{
    oracle_certify, run_grid, run_pbt_like, run_random, run_uniform, ORACLE_VERSION,
};
use adaseg::ensemble::PolicyEnsemble;
use adaseg::orchestrator::{explore, transfer_train};
use adaseg::report::build_report;
use adaseg::{Error, Result, RunConfig};

#[derive(Parser)]
#[command(
    name = "adaseg",
    about = "Automated online multi-loss adaptation: exploration, transfer, baselines and reports",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonRunArgs {
    /// Path to the run config JSON.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for run artifacts.
    #[arg(long)]
    out: PathBuf,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Bound the trainee executor pool.
    #[arg(long)]
    parallel: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Exploration phase: train the weight controller against m parallel
    /// models and save the snapshot ensemble.
    Explore {
        #[command(flatten)]
        common: CommonRunArgs,
    },
    /// Transfer phase: train a fresh model under a saved policy ensemble.
    Transfer {
        #[command(flatten)]
        common: CommonRunArgs,
        /// Path to a saved ensemble (ensemble.bin).
        #[arg(long)]
        ensemble: PathBuf,
        /// Override the config's transfer epoch count.
        #[arg(long)]
        epochs: Option<u32>,
    },
    /// Reference tuners: uniform, grid, pbt or random.
    Baseline {
        /// Baseline kind: uniform | grid | pbt | random.
        #[arg(long)]
        kind: String,
        #[command(flatten)]
        common: CommonRunArgs,
        /// Total epochs for single-model baselines (default: E + 1).
        #[arg(long)]
        epochs: Option<u32>,
        /// Grid axis values, comma separated (grid only).
        #[arg(long, value_delimiter = ',')]
        axis: Option<Vec<f64>>,
        /// Run budget (random only).
        #[arg(long, default_value_t = 16)]
        budget: u32,
        /// Multiplicative jitter (pbt only).
        #[arg(long, default_value_t = 1.25)]
        jitter: f64,
    },
    /// Certify the synthetic task behind a config and write its fixture.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        /// Directory for fixture files.
        #[arg(long)]
        fixtures: PathBuf,
        #[arg(long)]
        parallel: Option<usize>,
    },
    /// Align finished runs by task and seed and print deltas against the
    /// uniform baseline.
    Report {
        /// Run directories (each containing summary.json).
        run_dirs: Vec<PathBuf>,
        /// Also write the table as CSV to this path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", path.display())))?;
    let mut config = RunConfig::from_json(&text)?;
    if let Some(seed) = seed {
        config.master_seed = seed;
    }
    Ok(config)
}

fn install_pool(threads: Option<usize>) -> Result<()> {
    if let Some(threads) = threads {
        if threads == 0 {
            return Err(Error::Config("--parallel must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot size the executor pool: {e}")))?;
    }
    Ok(())
}

fn cmd_explore(common: &CommonRunArgs) -> Result<()> {
    let config = load_config(&common.config, common.seed)?;
    install_pool(common.parallel)?;
    let grouping = config.grouping();
    let outcome = explore(&config)?;
    let summary = summarize_explore(
        &outcome.log,
        config.trainee.task_kind.as_str(),
        config.master_seed,
        |w| grouping.expand(w),
    )?;
    write_run_dir(&common.out, &outcome.log, &summary)?;
    outcome.ensemble.save(&common.out.join("ensemble.bin"))?;
    log::info!(
        "explore finished: best score {:.3} over {} checkpoints",
        outcome.best_score,
        summary.steps
    );
    println!("{}", common.out.join("summary.json").display());
    Ok(())
}

fn cmd_transfer(
    common: &CommonRunArgs,
    ensemble_path: &Path,
    epochs: Option<u32>,
) -> Result<()> {
    let config = load_config(&common.config, common.seed)?;
    install_pool(common.parallel)?;
    let grouping = config.grouping();
    let ensemble = PolicyEnsemble::load(ensemble_path)?;
    let outcome = transfer_train(&ensemble, &config, epochs)?;
    let summary = summarize_transfer(
        &outcome.log,
        config.trainee.task_kind.as_str(),
        config.master_seed,
        |w| grouping.expand(w),
    )?;
    write_run_dir(&common.out, &outcome.log, &summary)?;
    log::info!("transfer finished: final score {:.3}", outcome.final_score);
    println!("{}", common.out.join("summary.json").display());
    Ok(())
}

fn cmd_baseline(
    kind: &str,
    common: &CommonRunArgs,
    epochs: Option<u32>,
    axis: Option<&[f64]>,
    budget: u32,
    jitter: f64,
) -> Result<()> {
    let config = load_config(&common.config, common.seed)?;
    install_pool(common.parallel)?;
    let task = config.trainee.task_kind.as_str().to_string();
    let seed = config.master_seed;
    match kind {
        "uniform" => {
            let outcome = run_uniform(&config, epochs)?;
            let summary = summarize_epoch_run(&outcome.log, "uniform", &task, seed)?;
            write_run_dir(&common.out, &outcome.log, &summary)?;
        }
        "grid" => {
            let axis = axis
                .filter(|a| !a.is_empty())
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.05, 0.2, 1.0, 5.0, 20.0]);
            let grid = run_grid(&config, &axis, epochs)?;
            // Re-run the winner to produce a standard run directory, plus the
            // full table for inspection.
            let outcome =
                adaseg::baselines::run_static(&config, &grid.best_weights, epochs, "grid")?;
            let summary = summarize_epoch_run(&outcome.log, "grid", &task, seed)?;
            write_run_dir(&common.out, &outcome.log, &summary)?;
            fs::write(
                common.out.join("grid_table.json"),
                serde_json::to_string_pretty(&grid).map_err(Error::from)?,
            )?;
        }
        "pbt" => {
            let outcome = run_pbt_like(&config, jitter)?;
            let mut summary = summarize_epoch_run(&outcome.log, "pbt", &task, seed)?;
            // Population runs score per member; keep the per-checkpoint best.
            summary.scores = outcome.best_scores.clone();
            summary.final_score = outcome.final_score;
            summary.steps = outcome.best_scores.len() as u32;
            summary.population = Some(config.m);
            write_run_dir(&common.out, &outcome.log, &summary)?;
        }
        "random" => {
            let outcome = run_random(&config, budget, (0.05, 20.0), epochs)?;
            let best = adaseg::baselines::run_static(
                &config,
                &outcome.best_weights,
                epochs,
                "random",
            )?;
            let summary = summarize_epoch_run(&best.log, "random", &task, seed)?;
            write_run_dir(&common.out, &best.log, &summary)?;
        }
        other => {
            return Err(Error::Config(format!(
                "unknown baseline kind '{other}' (expected uniform | grid | pbt | random)"
            )));
        }
    }
    println!("{}", common.out.join("summary.json").display());
    Ok(())
}

fn cmd_oracle(config_path: &Path, fixtures: &Path, parallel: Option<usize>) -> Result<()> {
    let config = load_config(config_path, None)?;
    install_pool(parallel)?;
    let record = oracle_certify(&config)?;
    fs::create_dir_all(fixtures)?;
    let name = format!("{}.json", config.trainee.task_kind.as_str());
    let path = fixtures.join(name);
    fs::write(&path, serde_json::to_string_pretty(&record)?)?;
    println!(
        "oracle v{ORACLE_VERSION}: uniform {:.2}, best static {:.2} (gap {:+.2}){} -> {}",
        record.uniform_score,
        record.best_static_score,
        record.static_gap,
        record
            .dynamic_gap
            .map(|g| format!(", best dynamic {:.2} (gap {:+.2})",
                record.best_dynamic.as_ref().map(|b| b.score).unwrap_or(f64::NAN), g))
            .unwrap_or_default(),
        path.display()
    );
    Ok(())
}

fn cmd_report(run_dirs: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let refs: Vec<&Path> = run_dirs.iter().map(PathBuf::as_path).collect();
    let report = build_report(&refs)?;
    print!("{}", report.to_text());
    if let Some(out) = out {
        fs::write(out, report.to_csv())?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Explore { common } => cmd_explore(common),
        Command::Transfer {
            common,
            ensemble,
            epochs,
        } => cmd_transfer(common, ensemble, *epochs),
        Command::Baseline {
            kind,
            common,
            epochs,
            axis,
            budget,
            jitter,
        } => cmd_baseline(kind, common, *epochs, axis.as_deref(), *budget, *jitter),
        Command::Oracle {
            config,
            fixtures,
            parallel,
        } => cmd_oracle(config, fixtures, *parallel),
        Command::Report { run_dirs, out } => cmd_report(run_dirs, out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("ADA_LOG_LEVEL")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
