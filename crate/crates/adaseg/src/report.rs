//! Comparison reports over finished run directories: align runs by task and
//! seed, and print score deltas against the uniform baseline.

use std::collections::BTreeMap;
use std::path::Path;

use crate::artifacts::{read_summary, RunSummary};
use crate::error::{Error, Result};

/// One aggregated row of the comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub task_kind: String,
    pub kind: String,
    pub seeds: Vec<u64>,
    pub median_score: f64,
    /// Median score minus the uniform median on the same task; `None` when
    /// no uniform run was supplied for the task.
    pub delta_vs_uniform: Option<f64>,
}

/// The full comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    }
}

/// Build a report from the summaries in the given run directories.
pub fn build_report(run_dirs: &[&Path]) -> Result<Report> {
    if run_dirs.is_empty() {
        return Err(Error::Config("report needs at least one run directory".into()));
    }
    let mut summaries: Vec<RunSummary> = Vec::with_capacity(run_dirs.len());
    for dir in run_dirs {
        summaries.push(read_summary(dir)?);
    }

    // (task, kind) -> per-seed scores.
    let mut groups: BTreeMap<(String, String), Vec<(u64, f64)>> = BTreeMap::new();
    for s in &summaries {
        groups
            .entry((s.task_kind.clone(), s.kind.clone()))
            .or_default()
            .push((s.master_seed, s.final_score));
    }

    let mut uniform_medians: BTreeMap<String, f64> = BTreeMap::new();
    for ((task, kind), entries) in &groups {
        if kind == "uniform" {
            let scores: Vec<f64> = entries.iter().map(|(_, s)| *s).collect();
            uniform_medians.insert(task.clone(), median(&scores));
        }
    }

    let mut rows = Vec::with_capacity(groups.len());
    for ((task, kind), mut entries) in groups {
        entries.sort_by_key(|(seed, _)| *seed);
        let seeds: Vec<u64> = entries.iter().map(|(seed, _)| *seed).collect();
        let scores: Vec<f64> = entries.iter().map(|(_, s)| *s).collect();
        let median_score = median(&scores);
        let delta_vs_uniform = uniform_medians.get(&task).map(|u| median_score - u);
        rows.push(ReportRow {
            task_kind: task,
            kind,
            seeds,
            median_score,
            delta_vs_uniform,
        });
    }
    Ok(Report { rows })
}

impl Report {
    /// Plain-text table.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<20} {:<10} {:>8} {:>10} {:>8}\n",
            "task", "method", "runs", "median", "delta"
        ));
        for row in &self.rows {
            let delta = row
                .delta_vs_uniform
                .map(|d| format!("{d:+.2}"))
                .unwrap_or_else(|| "-".to_string());
            out.push_str(&format!(
                "{:<20} {:<10} {:>8} {:>10.2} {:>8}\n",
                row.task_kind,
                row.kind,
                row.seeds.len(),
                row.median_score,
                delta
            ));
        }
        out
    }

    /// CSV with one row per (task, method) group.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("task,method,runs,median_score,delta_vs_uniform\n");
        for row in &self.rows {
            let delta = row
                .delta_vs_uniform
                .map(|d| format!("{d}"))
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                row.task_kind,
                row.kind,
                row.seeds.len(),
                row.median_score,
                delta
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artifacts::write_run_dir;
    use crate::logging::RunLog;

    fn fake_run(dir: &Path, kind: &str, seed: u64, score: f64) {
        let summary = RunSummary {
            kind: kind.into(),
            task_kind: "static-imbalance".into(),
            master_seed: seed,
            n: 2,
            population: None,
            steps: 1,
            final_score: score,
            scores: vec![score],
            weights: vec![vec![1.0, 1.0]],
        };
        write_run_dir(dir, &RunLog::new(), &summary).unwrap();
    }

    #[test]
    fn report_aligns_and_computes_deltas() {
        let tmp = tempfile::tempdir().unwrap();
        let dirs = ["u1", "u2", "a1", "a2"];
        fake_run(&tmp.path().join("u1"), "uniform", 1, 50.0);
        fake_run(&tmp.path().join("u2"), "uniform", 2, 52.0);
        fake_run(&tmp.path().join("a1"), "transfer", 1, 60.0);
        fake_run(&tmp.path().join("a2"), "transfer", 2, 64.0);
        let paths: Vec<_> = dirs.iter().map(|d| tmp.path().join(d)).collect();
        let refs: Vec<&Path> = paths.iter().map(|p| p.as_path()).collect();
        let report = build_report(&refs).unwrap();
        assert_eq!(report.rows.len(), 2);
        let uniform = report.rows.iter().find(|r| r.kind == "uniform").unwrap();
        assert_eq!(uniform.delta_vs_uniform, Some(0.0));
        let transfer = report.rows.iter().find(|r| r.kind == "transfer").unwrap();
        assert_eq!(transfer.median_score, 62.0);
        assert_eq!(transfer.delta_vs_uniform, Some(11.0));
        assert!(report.to_text().contains("transfer"));
        assert!(report.to_csv().lines().count() == 3);
    }

    #[test]
    fn empty_report_is_an_error() {
        assert!(build_report(&[]).is_err());
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
