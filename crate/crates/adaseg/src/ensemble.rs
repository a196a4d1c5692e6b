//! Policy-ensemble transfer: a discounted convex combination of the
//! per-checkpoint policy snapshots generates weights during a fresh training
//! run.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::controller::SnapshotStore;
use crate::error::{Error, Result};
use crate::policy::PolicySnapshot;
use crate::types::{LossVector, WeightVector, WEIGHT_FLOOR};

/// Discount weights over the snapshots for transfer epoch `e` of
/// `total_epochs`: c_t proportional to gamma^|e*T/E - t|, normalized to sum
/// to one. The alignment term e*T/E stays real-valued.
pub fn ensemble_coefficients(e: u32, total_epochs: u32, checkpoints: u32, gamma: f64) -> Vec<f64> {
    assert!(e >= 1 && e <= total_epochs, "epoch {e} outside 1..={total_epochs}");
    assert!(checkpoints >= 1);
    assert!(gamma > 0.0 && gamma <= 1.0);
    let align = f64::from(e) * f64::from(checkpoints) / f64::from(total_epochs);
    let unnormalized: Vec<f64> = (1..=checkpoints)
        .map(|t| gamma.powf((align - f64::from(t)).abs()))
        .collect();
    let z: f64 = unnormalized.iter().sum();
    unnormalized.into_iter().map(|c| c / z).collect()
}

/// The transfer prediction for one epoch, before and after the positivity
/// floor, along with the coefficients that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsemblePrediction {
    pub raw: WeightVector,
    pub applied: WeightVector,
    pub coefficients: Vec<f64>,
}

/// Frozen snapshots pi^1..pi^T plus the discount, ready to predict weights
/// for any epoch of a fresh run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyEnsemble {
    gamma: f64,
    checkpoints: u32,
    snapshots: Vec<PolicySnapshot>,
}

impl PolicyEnsemble {
    pub fn new(snapshots: Vec<PolicySnapshot>, gamma: f64) -> Result<Self> {
        if snapshots.is_empty() {
            return Err(Error::Config("policy ensemble must not be empty".into()));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::Config("gamma must lie in (0, 1]".into()));
        }
        let dim = snapshots[0].params.input_dim();
        if snapshots.iter().any(|s| s.params.input_dim() != dim) {
            return Err(Error::Dimension(
                "ensemble snapshots disagree on loss dimension".into(),
            ));
        }
        let checkpoints = snapshots.len() as u32;
        Ok(Self {
            gamma,
            checkpoints,
            snapshots,
        })
    }

    pub fn from_store(store: SnapshotStore, gamma: f64) -> Result<Self> {
        Self::new(store.into_snapshots(), gamma)
    }

    /// Keep only the final snapshot (the single-policy transfer variant).
    pub fn final_snapshot_only(&self) -> Self {
        let last = self
            .snapshots
            .last()
            .expect("ensemble is never empty")
            .clone();
        Self {
            gamma: self.gamma,
            checkpoints: 1,
            snapshots: vec![last],
        }
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn input_dim(&self) -> usize {
        self.snapshots[0].params.input_dim()
    }

    pub fn snapshots(&self) -> &[PolicySnapshot] {
        &self.snapshots
    }

    pub fn coefficients(&self, e: u32, total_epochs: u32) -> Vec<f64> {
        ensemble_coefficients(e, total_epochs, self.checkpoints, self.gamma)
    }

    /// Discounted combination of the snapshots' weight predictions on the
    /// given loss state. Each snapshot's lambda is computed independently
    /// (post-division) and the combination is floored before application;
    /// the unfloored value is retained for analysis.
    pub fn predict(&self, losses: &LossVector, e: u32, total_epochs: u32) -> Result<EnsemblePrediction> {
        if losses.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "loss dimension mismatch: ensemble expects {}, got {}",
                self.input_dim(),
                losses.len()
            )));
        }
        let coefficients = self.coefficients(e, total_epochs);
        let mut combined = vec![0.0; losses.len()];
        for (snapshot, c) in self.snapshots.iter().zip(&coefficients) {
            let lambda = snapshot.params.weights_from_losses(losses)?;
            for (acc, v) in combined.iter_mut().zip(lambda.values()) {
                *acc += c * v;
            }
        }
        let raw = WeightVector::new(combined)?;
        let applied = raw.floored(WEIGHT_FLOOR);
        Ok(EnsemblePrediction {
            raw,
            applied,
            coefficients,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        let ensemble: PolicyEnsemble = serde_json::from_slice(&bytes)?;
        if ensemble.snapshots.is_empty() {
            return Err(Error::Config("loaded ensemble is empty".into()));
        }
        Ok(ensemble)
    }
}
