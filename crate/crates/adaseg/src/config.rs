//! Run configuration and loss grouping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trainee::TraineeSpec;
use crate::types::LossVector;

/// A partition of the raw loss indices. Losses inside one group are averaged
/// into a single effective loss and share one weight, so the controller only
/// ever sees `effective_len()` dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrouping {
    groups: Vec<Vec<usize>>,
    membership: Vec<usize>,
}

impl LossGrouping {
    /// Every loss in its own group: grouping disabled.
    pub fn singletons(n: usize) -> Self {
        Self {
            groups: (0..n).map(|i| vec![i]).collect(),
            membership: (0..n).collect(),
        }
    }

    /// Build a grouping over `n` losses, rejecting overlaps and gaps.
    pub fn new(groups: Vec<Vec<usize>>, n: usize) -> Result<Self> {
        let mut membership = vec![usize::MAX; n];
        for (g, members) in groups.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::Config("loss group must not be empty".into()));
            }
            for &i in members {
                if i >= n {
                    return Err(Error::Config(format!(
                        "loss group index {i} out of range for {n} losses"
                    )));
                }
                if membership[i] != usize::MAX {
                    return Err(Error::Config(format!("groups overlap at loss index {i}")));
                }
                membership[i] = g;
            }
        }
        if let Some(i) = membership.iter().position(|&g| g == usize::MAX) {
            return Err(Error::Config(format!(
                "groups must cover every loss index; index {i} is unassigned"
            )));
        }
        Ok(Self { groups, membership })
    }

    pub fn raw_len(&self) -> usize {
        self.membership.len()
    }

    /// Number of effective losses (and weights) after grouping.
    pub fn effective_len(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group_of(&self, raw_index: usize) -> usize {
        self.membership[raw_index]
    }

    pub fn group_size(&self, group: usize) -> usize {
        self.groups[group].len()
    }

    /// Average raw per-loss values within each group.
    pub fn collapse(&self, raw: &[f64]) -> Vec<f64> {
        self.groups
            .iter()
            .map(|members| members.iter().map(|&i| raw[i]).sum::<f64>() / members.len() as f64)
            .collect()
    }

    /// Grouped interval means as seen by the controller.
    pub fn collapse_losses(&self, raw: &LossVector) -> Result<LossVector> {
        if raw.len() != self.raw_len() {
            return Err(Error::Dimension(format!(
                "loss vector has {} entries, grouping covers {}",
                raw.len(),
                self.raw_len()
            )));
        }
        LossVector::new(self.collapse(raw.values()))
    }

    /// Expand per-group values back to one value per raw loss.
    pub fn expand(&self, grouped: &[f64]) -> Vec<f64> {
        self.membership.iter().map(|&g| grouped[g]).collect()
    }
}

fn default_m() -> usize {
    8
}
fn default_checkpoints() -> u32 {
    8
}
fn default_epochs() -> u32 {
    8
}
fn default_sigma() -> f64 {
    0.2
}
fn default_gamma() -> f64 {
    0.9
}
fn default_policy_lr() -> f64 {
    5e-2
}
fn default_policy_weight_decay() -> f64 {
    5e-4
}

/// Full description of one run: controller hyperparameters, schedule sizes
/// and the trainee to drive. Loads from a single JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Raw loss count; must match the trainee spec.
    pub n: usize,
    /// Population size.
    #[serde(default = "default_m")]
    pub m: usize,
    /// Exploration checkpoints (T).
    #[serde(default = "default_checkpoints", alias = "T")]
    pub checkpoints: u32,
    /// Transfer-training epochs (E).
    #[serde(default = "default_epochs", alias = "E")]
    pub transfer_epochs: u32,
    /// Candidate sampling standard deviation.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Policy-ensemble discount.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Iterations between checkpoints (q); `null` means one pass over the
    /// trainee's training set.
    #[serde(default)]
    pub iterations_per_checkpoint: Option<u32>,
    #[serde(default = "default_policy_lr")]
    pub policy_lr: f64,
    #[serde(default = "default_policy_weight_decay")]
    pub policy_weight_decay: f64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(alias = "trainee_spec")]
    pub trainee: TraineeSpec,
    /// Optional partition of the raw loss indices; grouped losses are
    /// averaged before weighting.
    #[serde(default)]
    pub loss_groups: Option<Vec<Vec<usize>>>,
}

impl RunConfig {
    /// Paper-default run over the ten-loss grouped task.
    pub fn default_grouped_ten_loss() -> Self {
        let trainee = TraineeSpec::grouped_ten_loss();
        Self {
            n: trainee.n,
            m: default_m(),
            checkpoints: default_checkpoints(),
            transfer_epochs: default_epochs(),
            sigma: default_sigma(),
            gamma: default_gamma(),
            iterations_per_checkpoint: None,
            policy_lr: default_policy_lr(),
            policy_weight_decay: default_policy_weight_decay(),
            master_seed: 0,
            loss_groups: Some(vec![vec![0, 1, 2], vec![3, 4, 5], vec![6, 7, 8], vec![9]]),
            trainee,
        }
    }

    /// Tuned run config for a shipped task kind: paper-default controller
    /// settings, with a denser checkpoint schedule for the phase task so the
    /// controller sees several updates per phase.
    pub fn for_task_kind(kind: crate::trainee::TaskKind) -> Self {
        use crate::trainee::TaskKind;
        match kind {
            TaskKind::StaticImbalance => Self::for_trainee(TraineeSpec::static_imbalance()),
            TaskKind::DynamicPhase => {
                let mut config = Self::for_trainee(TraineeSpec::dynamic_phase());
                config.checkpoints = 16;
                config.transfer_epochs = 16;
                config
            }
            TaskKind::GroupedTenLoss => Self::default_grouped_ten_loss(),
        }
    }

    /// Run config over the given trainee with singleton grouping and the
    /// paper-default controller settings.
    pub fn for_trainee(trainee: TraineeSpec) -> Self {
        Self {
            n: trainee.n,
            m: default_m(),
            checkpoints: default_checkpoints(),
            transfer_epochs: default_epochs(),
            sigma: default_sigma(),
            gamma: default_gamma(),
            iterations_per_checkpoint: None,
            policy_lr: default_policy_lr(),
            policy_weight_decay: default_policy_weight_decay(),
            master_seed: 0,
            loss_groups: None,
            trainee,
        }
    }

    /// Check every invariant, returning the config unchanged when it holds.
    pub fn validate(self) -> Result<Self> {
        if self.n == 0 {
            return Err(Error::Config("loss count n must be at least 1".into()));
        }
        if self.n != self.trainee.n {
            return Err(Error::Config(format!(
                "config n={} disagrees with trainee loss count {}",
                self.n, self.trainee.n
            )));
        }
        if self.m < 2 {
            return Err(Error::Config(
                "population size m must be at least 2 (population rewards need std)".into(),
            ));
        }
        if !self.sigma.is_finite() || self.sigma <= 0.0 {
            return Err(Error::Config("sigma must be positive".into()));
        }
        if !self.gamma.is_finite() || self.gamma <= 0.0 || self.gamma > 1.0 {
            return Err(Error::Config("gamma must lie in (0, 1]".into()));
        }
        if self.checkpoints == 0 {
            return Err(Error::Config("checkpoint count T must be at least 1".into()));
        }
        if self.transfer_epochs == 0 {
            return Err(Error::Config("transfer epoch count E must be at least 1".into()));
        }
        if !self.policy_lr.is_finite() || self.policy_lr <= 0.0 {
            return Err(Error::Config("policy learning rate must be positive".into()));
        }
        if self.policy_weight_decay < 0.0 {
            return Err(Error::Config("policy weight decay must be nonnegative".into()));
        }
        if let Some(q) = self.iterations_per_checkpoint {
            if q == 0 {
                return Err(Error::Config(
                    "iterations_per_checkpoint must be at least 1".into(),
                ));
            }
        }
        if let Some(groups) = &self.loss_groups {
            LossGrouping::new(groups.clone(), self.n)?;
        }
        self.trainee.validate()?;
        Ok(self)
    }

    /// The grouping in effect: the configured one, or singletons.
    pub fn grouping(&self) -> LossGrouping {
        match &self.loss_groups {
            Some(groups) => LossGrouping::new(groups.clone(), self.n)
                .expect("validated config carries a consistent grouping"),
            None => LossGrouping::singletons(self.n),
        }
    }

    /// Iterations per training interval: configured q, or one epoch.
    pub fn interval_iterations(&self) -> u32 {
        self.iterations_per_checkpoint
            .unwrap_or_else(|| self.trainee.epoch_iterations())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text)?;
        config.validate()
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Validate a config, returning it unchanged on success.
pub fn validate_config(config: RunConfig) -> Result<RunConfig> {
    config.validate()
}
