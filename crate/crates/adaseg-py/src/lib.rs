//! Python bindings: the controller math (rewards, ensemble coefficients,
//! policy forward/weight recovery) plus whole-run entry points that write
//! the same artifacts as the CLI.

use std::path::Path;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use adaseg::artifacts::{summarize_epoch_run, summarize_explore, summarize_transfer, write_run_dir};
use adaseg::baselines;
use adaseg::ensemble::{self, PolicyEnsemble};
use adaseg::orchestrator;
use adaseg::policy::PolicyParams;
use adaseg::rewards;
use adaseg::rng::{derive_rng, StreamId};
use adaseg::trainee::TaskKind;
use adaseg::{Error, LossVector, RunConfig, ScoreVector, WeightVector};

fn to_py_err(e: Error) -> PyErr {
    match e.exit_code() {
        1 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse_config(config_json: &str, seed: Option<u64>) -> PyResult<RunConfig> {
    let mut config = RunConfig::from_json(config_json).map_err(to_py_err)?;
    if let Some(seed) = seed {
        config.master_seed = seed;
    }
    Ok(config)
}

fn scores(values: Vec<f64>) -> PyResult<ScoreVector> {
    ScoreVector::new(values).map_err(to_py_err)
}

/// Shipped run config for a task kind, as a JSON string.
#[pyfunction]
fn default_config(task_kind: &str) -> PyResult<String> {
    let kind = match task_kind {
        "static-imbalance" => TaskKind::StaticImbalance,
        "dynamic-phase" => TaskKind::DynamicPhase,
        "grouped-ten-loss" => TaskKind::GroupedTenLoss,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown task kind '{other}'"
            )))
        }
    };
    Ok(RunConfig::for_task_kind(kind).to_json_pretty())
}

/// Population-standardized scores (zero mean, unit variance).
#[pyfunction]
fn local_reward(values: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(rewards::local_reward(&scores(values)?))
}

/// Standardized improvement over the previous best score.
#[pyfunction]
fn improvement_reward(values: Vec<f64>, prev_best: f64) -> PyResult<Vec<f64>> {
    Ok(rewards::improvement_reward(&scores(values)?, prev_best))
}

/// Scaled combination of local and improvement rewards; candidates flagged
/// invalid receive exactly -1.
#[pyfunction]
fn combined_reward(
    values: Vec<f64>,
    prev_best: f64,
    t: u32,
    total: u32,
    validity: Vec<bool>,
) -> PyResult<Vec<f64>> {
    let v = scores(values)?;
    if validity.len() != v.len() {
        return Err(PyValueError::new_err("validity length mismatch"));
    }
    Ok(rewards::combined_reward(&v, prev_best, t, total, &validity).values)
}

/// Discounted snapshot coefficients for transfer epoch `e` of `total`.
#[pyfunction]
fn ensemble_coefficients(e: u32, total_epochs: u32, checkpoints: u32, gamma: f64) -> Vec<f64> {
    ensemble::ensemble_coefficients(e, total_epochs, checkpoints, gamma)
}

/// The weight controller's policy network.
#[pyclass]
struct Policy {
    params: PolicyParams,
}

#[pymethods]
impl Policy {
    /// Freshly initialized policy for `n` losses.
    #[new]
    #[pyo3(signature = (n, seed = 0))]
    fn new(n: usize, seed: u64) -> PyResult<Self> {
        if n == 0 {
            return Err(PyValueError::new_err("n must be at least 1"));
        }
        let mut rng = derive_rng(seed, &StreamId::PolicyInit);
        Ok(Self {
            params: PolicyParams::init(n, &mut rng),
        })
    }

    /// Identity policy: predicts unit weights on any nonnegative loss state.
    #[staticmethod]
    fn identity(n: usize) -> PyResult<Self> {
        if n == 0 || n > 16 {
            return Err(PyValueError::new_err("n must lie in 1..=16"));
        }
        Ok(Self {
            params: PolicyParams::identity(n),
        })
    }

    /// Estimated weighted loss for the given loss state.
    fn forward(&self, losses: Vec<f64>) -> PyResult<Vec<f64>> {
        self.params.forward(&losses).map_err(to_py_err)
    }

    /// Predicted weights: the estimated weighted loss divided elementwise by
    /// the floored loss state.
    fn weights(&self, losses: Vec<f64>) -> PyResult<Vec<f64>> {
        let l = LossVector::new(losses).map_err(to_py_err)?;
        Ok(self
            .params
            .weights_from_losses(&l)
            .map_err(to_py_err)?
            .values()
            .to_vec())
    }
}

/// (raw candidates, floored candidates, per-candidate validity).
type CandidateTriple = (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<bool>);

/// Draw m weight candidates around `mu`; returns (raw, applied, validity).
#[pyfunction]
#[pyo3(signature = (mu, sigma, m, seed = 0))]
fn sample_candidates(
    mu: Vec<f64>,
    sigma: f64,
    m: usize,
    seed: u64,
) -> PyResult<CandidateTriple> {
    if sigma < 0.0 {
        return Err(PyValueError::new_err("sigma must be nonnegative"));
    }
    let mu = WeightVector::new(mu).map_err(to_py_err)?;
    let mut rng = derive_rng(seed, &StreamId::Candidates { t: 1 });
    let set = adaseg::controller::sample_candidates(&mu, sigma, m, &mut rng);
    Ok((
        set.raw.into_iter().map(Vec::from).collect(),
        set.applied.into_iter().map(Vec::from).collect(),
        set.validity,
    ))
}

/// Run the exploration phase and write run.jsonl / summary.json /
/// ensemble.bin / weights_trajectory.csv into `out_dir`. Returns the summary
/// as a JSON string.
#[pyfunction]
#[pyo3(signature = (config_json, out_dir, seed = None))]
fn run_explore(config_json: &str, out_dir: &str, seed: Option<u64>) -> PyResult<String> {
    let config = parse_config(config_json, seed)?;
    let grouping = config.grouping();
    let outcome = orchestrator::explore(&config).map_err(to_py_err)?;
    let summary = summarize_explore(
        &outcome.log,
        config.trainee.task_kind.as_str(),
        config.master_seed,
        |w| grouping.expand(w),
    )
    .map_err(to_py_err)?;
    let dir = Path::new(out_dir);
    write_run_dir(dir, &outcome.log, &summary).map_err(to_py_err)?;
    outcome
        .ensemble
        .save(&dir.join("ensemble.bin"))
        .map_err(to_py_err)?;
    serde_json::to_string_pretty(&summary).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Train a fresh model under a saved policy ensemble; writes the run
/// artifacts and returns the summary as a JSON string.
#[pyfunction]
#[pyo3(signature = (config_json, ensemble_path, out_dir, epochs = None, seed = None))]
fn run_transfer(
    config_json: &str,
    ensemble_path: &str,
    out_dir: &str,
    epochs: Option<u32>,
    seed: Option<u64>,
) -> PyResult<String> {
    let config = parse_config(config_json, seed)?;
    let grouping = config.grouping();
    let ensemble = PolicyEnsemble::load(Path::new(ensemble_path)).map_err(to_py_err)?;
    let outcome = orchestrator::transfer_train(&ensemble, &config, epochs).map_err(to_py_err)?;
    let summary = summarize_transfer(
        &outcome.log,
        config.trainee.task_kind.as_str(),
        config.master_seed,
        |w| grouping.expand(w),
    )
    .map_err(to_py_err)?;
    write_run_dir(Path::new(out_dir), &outcome.log, &summary).map_err(to_py_err)?;
    serde_json::to_string_pretty(&summary).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Train with every weight equal to one; writes the run artifacts and
/// returns the summary as a JSON string.
#[pyfunction]
#[pyo3(signature = (config_json, out_dir, epochs = None, seed = None))]
fn run_uniform(
    config_json: &str,
    out_dir: &str,
    epochs: Option<u32>,
    seed: Option<u64>,
) -> PyResult<String> {
    let config = parse_config(config_json, seed)?;
    let outcome = baselines::run_uniform(&config, epochs).map_err(to_py_err)?;
    let summary = summarize_epoch_run(
        &outcome.log,
        "uniform",
        config.trainee.task_kind.as_str(),
        config.master_seed,
    )
    .map_err(to_py_err)?;
    write_run_dir(Path::new(out_dir), &outcome.log, &summary).map_err(to_py_err)?;
    serde_json::to_string_pretty(&summary).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn adaseg_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Policy>()?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(local_reward, m)?)?;
    m.add_function(wrap_pyfunction!(improvement_reward, m)?)?;
    m.add_function(wrap_pyfunction!(combined_reward, m)?)?;
    m.add_function(wrap_pyfunction!(ensemble_coefficients, m)?)?;
    m.add_function(wrap_pyfunction!(sample_candidates, m)?)?;
    m.add_function(wrap_pyfunction!(run_explore, m)?)?;
    m.add_function(wrap_pyfunction!(run_transfer, m)?)?;
    m.add_function(wrap_pyfunction!(run_uniform, m)?)?;
    Ok(())
}
