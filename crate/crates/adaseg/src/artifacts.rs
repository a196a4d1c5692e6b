//! Run-directory artifacts: `run.jsonl`, `summary.json`,
//! `weights_trajectory.csv` and `ensemble.bin`. Every summary number is
//! recomputed from the log, so nothing in `summary.json` exists only there.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logging::{Record, RunLog};

/// Summary of one run, written next to its log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// Run kind: explore, transfer, uniform, grid, pbt, random.
    pub kind: String,
    pub task_kind: String,
    pub master_seed: u64,
    /// Raw loss count.
    pub n: usize,
    /// Population size, where one exists.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population: Option<usize>,
    /// Checkpoints (exploration) or epochs (single-model runs).
    pub steps: u32,
    pub final_score: f64,
    /// Best score per checkpoint, or score per epoch.
    pub scores: Vec<f64>,
    /// Weight trajectory, expanded to one value per raw loss: for explore
    /// the best candidate per checkpoint, otherwise the applied weights per
    /// epoch.
    pub weights: Vec<Vec<f64>>,
}

/// Numbers recomputable from an exploration log.
pub fn summarize_explore(
    log: &RunLog,
    task_kind: &str,
    master_seed: u64,
    expand: impl Fn(&[f64]) -> Vec<f64>,
) -> Result<RunSummary> {
    let mut scores = Vec::new();
    let mut weights = Vec::new();
    let mut population = None;
    let mut n = 0;
    for record in &log.records {
        if let Record::Checkpoint { record, .. } = record {
            scores.push(record.best_score);
            weights.push(expand(record.applied[record.best_index].values()));
            population = Some(record.scores.len());
            n = weights.last().map(Vec::len).unwrap_or(0);
        }
    }
    if scores.is_empty() {
        return Err(Error::Config("log contains no checkpoints".into()));
    }
    Ok(RunSummary {
        kind: "explore".into(),
        task_kind: task_kind.into(),
        master_seed,
        n,
        population,
        steps: scores.len() as u32,
        final_score: *scores.last().expect("nonempty"),
        scores,
        weights,
    })
}

/// Numbers recomputable from a transfer log.
pub fn summarize_transfer(
    log: &RunLog,
    task_kind: &str,
    master_seed: u64,
    expand: impl Fn(&[f64]) -> Vec<f64>,
) -> Result<RunSummary> {
    let mut scores = Vec::new();
    let mut weights = Vec::new();
    for record in &log.records {
        if let Record::TransferStep {
            lambda_applied,
            score,
            ..
        } = record
        {
            scores.push(*score);
            weights.push(expand(lambda_applied));
        }
    }
    if scores.is_empty() {
        return Err(Error::Config("log contains no transfer steps".into()));
    }
    Ok(RunSummary {
        kind: "transfer".into(),
        task_kind: task_kind.into(),
        master_seed,
        n: weights.last().map(Vec::len).unwrap_or(0),
        population: None,
        steps: scores.len() as u32,
        final_score: *scores.last().expect("nonempty"),
        scores,
        weights,
    })
}

/// Numbers recomputable from a single-model baseline log (epoch records with
/// the given role, pseudo epoch excluded).
pub fn summarize_epoch_run(
    log: &RunLog,
    kind: &str,
    task_kind: &str,
    master_seed: u64,
) -> Result<RunSummary> {
    let mut scores = Vec::new();
    let mut weights = Vec::new();
    for record in &log.records {
        if let Record::Epoch {
            e,
            weights: w,
            score,
            ..
        } = record
        {
            if *e == 0 {
                continue;
            }
            if let Some(score) = score {
                scores.push(*score);
                weights.push(w.clone());
            }
        }
    }
    if scores.is_empty() {
        return Err(Error::Config("log contains no scored epochs".into()));
    }
    Ok(RunSummary {
        kind: kind.into(),
        task_kind: task_kind.into(),
        master_seed,
        n: weights.last().map(Vec::len).unwrap_or(0),
        population: None,
        steps: scores.len() as u32,
        final_score: *scores.last().expect("nonempty"),
        scores,
        weights,
    })
}

/// Write a weight trajectory as CSV: `t, lambda_0, ..., lambda_{n-1}`.
pub fn write_trajectory_csv(path: &Path, weights: &[Vec<f64>]) -> Result<()> {
    let n = weights.first().map(Vec::len).unwrap_or(0);
    let mut out = String::from("t");
    for i in 0..n {
        out.push_str(&format!(",lambda_{i}"));
    }
    out.push('\n');
    for (t, row) in weights.iter().enumerate() {
        out.push_str(&format!("{}", t + 1));
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Write the shared artifact set for one run directory.
pub fn write_run_dir(dir: &Path, log: &RunLog, summary: &RunSummary) -> Result<()> {
    fs::create_dir_all(dir)?;
    log.write(&dir.join("run.jsonl"))?;
    fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(summary)?,
    )?;
    write_trajectory_csv(&dir.join("weights_trajectory.csv"), &summary.weights)?;
    Ok(())
}

/// Load the summary of a finished run directory.
pub fn read_summary(dir: &Path) -> Result<RunSummary> {
    let path = dir.join("summary.json");
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.csv");
        write_trajectory_csv(&path, &[vec![1.0, 0.5], vec![2.0, 0.25]]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,lambda_0,lambda_1");
        assert_eq!(lines[1], "1,1,0.5");
        assert_eq!(lines[2], "2,2,0.25");
    }
}
