//! Structured run logs: one JSON object per line. Records carry no clocks,
//! paths or thread ids, so seeded runs serialize byte-identically.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::types::CheckpointRecord;

/// One line of the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Record {
    /// One exploration checkpoint: candidates, scores, rewards, best index.
    /// The flattened record carries `t`.
    Checkpoint {
        #[serde(flatten)]
        record: Box<CheckpointRecord>,
        rng_streams: Vec<String>,
    },
    /// One plain training epoch (pseudo epoch or a baseline run).
    Epoch {
        e: u32,
        role: String,
        weights: Vec<f64>,
        losses: Vec<f64>,
        per_iteration: Vec<Vec<f64>>,
        score: Option<f64>,
        rng_streams: Vec<String>,
    },
    /// One REINFORCE step on the controller.
    PolicyUpdate {
        t: u32,
        rewards: Vec<f64>,
        grad_norm: f64,
        params_norm: f64,
        lr: f64,
        weight_decay: f64,
    },
    /// One transfer-training epoch under the policy ensemble.
    TransferStep {
        e: u32,
        loss_state: Vec<f64>,
        lambda_raw: Vec<f64>,
        lambda_applied: Vec<f64>,
        coefficients: Vec<f64>,
        losses: Vec<f64>,
        per_iteration: Vec<Vec<f64>>,
        score: f64,
        rng_streams: Vec<String>,
    },
}

/// Append-only record sequence for one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    pub records: Vec<Record>,
}

impl RunLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: Record) {
        self.records.push(record);
    }

    /// Serialize as JSONL. Deterministic: identical logs give identical
    /// bytes.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for record in &self.records {
            out.push_str(&serde_json::to_string(record).expect("log records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_jsonl())?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(line)?);
        }
        Ok(Self { records })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{LossVector, ScoreVector, WeightVector};

    #[test]
    fn log_round_trips_through_jsonl() {
        let mut log = RunLog::new();
        log.push(Record::Epoch {
            e: 0,
            role: "pseudo_epoch".into(),
            weights: vec![1.0, 1.0],
            losses: vec![0.5, 0.25],
            per_iteration: vec![vec![0.6, 0.3], vec![0.4, 0.2]],
            score: Some(12.5),
            rng_streams: vec!["trainee/primary".into()],
        });
        let record = CheckpointRecord::new(
            1,
            LossVector::new(vec![0.5, 0.25]).unwrap(),
            vec![WeightVector::uniform(2); 2],
            vec![WeightVector::uniform(2); 2],
            vec![true, true],
            ScoreVector::new(vec![10.0, 11.0]).unwrap(),
            vec![-0.5, 0.5],
            9.0,
        )
        .unwrap();
        log.push(Record::Checkpoint {
            record: Box::new(record),
            rng_streams: vec!["candidates/t=2".into()],
        });
        let text = log.to_jsonl();
        let back = RunLog::parse(&text).unwrap();
        assert_eq!(log, back);
        // Deterministic re-serialization.
        assert_eq!(text, back.to_jsonl());
    }
}
