//! Automated online multi-loss adaptation.
//!
//! A small policy network maps the current per-loss training state to loss
//! weights (recovered from a predicted weighted loss by elementwise
//! division), explores Gaussian weight candidates across a population of m
//! models trained in parallel, updates itself by policy gradients on
//! population-standardized validation rewards, and archives one snapshot per
//! checkpoint. A discounted ensemble of those snapshots then steers fresh
//! training runs of any length. Synthetic multi-loss trainees, baseline
//! tuners and a brute-force oracle make the whole pipeline testable at desk
//! scale.

pub mod artifacts;
pub mod baselines;
pub mod config;
pub mod controller;
pub mod ensemble;
pub mod error;
pub mod logging;
pub mod orchestrator;
pub mod policy;
pub mod report;
pub mod rewards;
pub mod rng;
pub mod trainee;
pub mod types;

pub use config::{validate_config, LossGrouping, RunConfig};
pub use error::{Error, Result};
pub use types::{CheckpointRecord, LossVector, ScoreVector, WeightVector};
