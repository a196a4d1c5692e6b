//! Synthetic multi-loss trainees: noisy least-squares problems with a shared
//! linear backbone and one head per loss. Loss conflict comes from
//! conflicting shared-target directions and per-loss scale disparities; the
//! dynamic task additionally switches which losses carry informative targets
//! halfway through training.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::LossGrouping;
use crate::error::{Error, Result};
use crate::rng::{derive_rng, RunRng, StreamId};
use crate::types::{LossVector, WeightVector, WEIGHT_FLOOR};

/// Fraction of the initial inner learning rate kept once the cosine schedule
/// runs out; runs longer than the horizon keep training at this floor.
const LR_FLOOR_FRACTION: f64 = 0.05;

/// Which synthetic task family a spec describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    /// Two conflicting losses with a large scale disparity; some static
    /// reweighting beats uniform weights.
    StaticImbalance,
    /// Two losses whose training targets swap between informative and
    /// corrupted at a fixed iteration; no static weighting is optimal.
    DynamicPhase,
    /// Ten losses in three stage-groups plus one dominant singleton,
    /// mirroring a detection-plus-segmentation loss layout.
    GroupedTenLoss,
}

impl TaskKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::StaticImbalance => "static-imbalance",
            TaskKind::DynamicPhase => "dynamic-phase",
            TaskKind::GroupedTenLoss => "grouped-ten-loss",
        }
    }
}

/// Definition of one synthetic trainee. The dataset (including held-out
/// normalization constants) is derived from `seed` alone, so every tuning
/// method sees the identical task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraineeSpec {
    pub task_kind: TaskKind,
    /// Raw loss count.
    pub n: usize,
    /// Shared backbone dimension; 0 builds a heads-only toy.
    pub shared_dim: usize,
    /// Per-loss head dimensions.
    pub head_dims: Vec<usize>,
    /// Per-loss scale factors multiplying the squared-residual losses.
    pub scales: Vec<f64>,
    /// Per-loss training-target noise levels.
    pub noise: Vec<f64>,
    /// Iteration at which task informativeness switches (dynamic-phase only).
    #[serde(default)]
    pub phase_switch_step: Option<u64>,
    /// Initial inner SGD learning rate.
    pub inner_lr: f64,
    /// Cosine-decay horizon in iterations.
    pub horizon_steps: u64,
    pub train_samples: usize,
    pub val_samples: usize,
    pub batch_size: usize,
    /// Dataset seed; independent of the run's master seed.
    pub seed: u64,
}

impl TraineeSpec {
    /// Two losses with a 25x scale disparity pulling the backbone toward
    /// orthogonal targets: uniform weights let the heavy loss dominate. The
    /// inner learning rate is set so one interval moves the model only
    /// partway, which makes the final score remember the whole run's
    /// weighting rather than just the last interval's.
    pub fn static_imbalance() -> Self {
        Self {
            task_kind: TaskKind::StaticImbalance,
            n: 2,
            shared_dim: 16,
            head_dims: vec![4, 4],
            scales: vec![0.2, 5.0],
            noise: vec![2.0, 2.0],
            phase_switch_step: None,
            inner_lr: 8e-4,
            horizon_steps: 288,
            train_samples: 256,
            val_samples: 128,
            batch_size: 8,
            seed: 0,
        }
    }

    /// Two equal-scale losses over the same shared target; each loss's
    /// training targets are sign-flipped (actively misleading) during its
    /// off phase, so the useful weighting changes mid-run.
    pub fn dynamic_phase() -> Self {
        Self {
            task_kind: TaskKind::DynamicPhase,
            n: 2,
            shared_dim: 16,
            head_dims: vec![4, 4],
            scales: vec![1.0, 1.0],
            noise: vec![1.5, 1.5],
            phase_switch_step: Some(256),
            inner_lr: 1.5e-3,
            horizon_steps: 544,
            train_samples: 128,
            val_samples: 128,
            batch_size: 4,
            seed: 0,
        }
    }

    /// Ten losses: three stage-groups of three plus one heavy singleton.
    pub fn grouped_ten_loss() -> Self {
        Self {
            task_kind: TaskKind::GroupedTenLoss,
            n: 10,
            shared_dim: 16,
            head_dims: vec![2; 10],
            scales: vec![0.05, 0.05, 0.05, 0.1, 0.1, 0.1, 0.2, 0.2, 0.2, 1.0],
            noise: vec![0.1; 10],
            phase_switch_step: None,
            inner_lr: 5e-3,
            horizon_steps: 288,
            train_samples: 256,
            val_samples: 128,
            batch_size: 8,
            seed: 0,
        }
    }

    pub fn by_kind(kind: TaskKind) -> Self {
        match kind {
            TaskKind::StaticImbalance => Self::static_imbalance(),
            TaskKind::DynamicPhase => Self::dynamic_phase(),
            TaskKind::GroupedTenLoss => Self::grouped_ten_loss(),
        }
    }

    /// Copy of this spec with every loss scale multiplied elementwise.
    pub fn rescaled(&self, factors: &[f64]) -> Result<Self> {
        if factors.len() != self.n {
            return Err(Error::Dimension(format!(
                "need {} rescale factors, got {}",
                self.n,
                factors.len()
            )));
        }
        let mut spec = self.clone();
        for (s, f) in spec.scales.iter_mut().zip(factors) {
            *s *= f;
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Iterations in one pass over the training set.
    pub fn epoch_iterations(&self) -> u32 {
        self.train_samples.div_ceil(self.batch_size) as u32
    }

    /// Number of distinct shared-target directions the dataset needs.
    fn required_directions(&self) -> usize {
        match self.task_kind {
            TaskKind::StaticImbalance | TaskKind::DynamicPhase => self.n,
            TaskKind::GroupedTenLoss => grouped_natural_groups().len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config("trainee needs at least two losses".into()));
        }
        if self.head_dims.len() != self.n {
            return Err(Error::Config(format!(
                "head_dims has {} entries for {} losses",
                self.head_dims.len(),
                self.n
            )));
        }
        if self.head_dims.contains(&0) {
            return Err(Error::Config("every head needs at least one parameter".into()));
        }
        if self.scales.len() != self.n || self.scales.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::Config(
                "scales must have one positive entry per loss".into(),
            ));
        }
        if self.noise.len() != self.n || self.noise.iter().any(|v| *v < 0.0) {
            return Err(Error::Config(
                "noise must have one nonnegative entry per loss".into(),
            ));
        }
        if !self.inner_lr.is_finite() || self.inner_lr <= 0.0 {
            return Err(Error::Config("inner_lr must be positive".into()));
        }
        if self.horizon_steps == 0 {
            return Err(Error::Config("horizon_steps must be at least 1".into()));
        }
        if self.train_samples == 0 || self.val_samples == 0 {
            return Err(Error::Config("sample counts must be positive".into()));
        }
        if self.batch_size == 0 || self.batch_size > self.train_samples {
            return Err(Error::Config(
                "batch_size must lie in 1..=train_samples".into(),
            ));
        }
        match self.task_kind {
            TaskKind::DynamicPhase => {
                let switch = self.phase_switch_step.ok_or_else(|| {
                    Error::Config("dynamic-phase needs phase_switch_step".into())
                })?;
                if switch == 0 || switch >= self.horizon_steps {
                    return Err(Error::Config(
                        "phase_switch_step must lie inside the training horizon".into(),
                    ));
                }
                if self.shared_dim == 0 {
                    return Err(Error::Config(
                        "dynamic-phase needs a shared backbone".into(),
                    ));
                }
            }
            TaskKind::StaticImbalance | TaskKind::GroupedTenLoss => {
                if self.phase_switch_step.is_some() {
                    return Err(Error::Config(
                        "phase_switch_step only applies to dynamic-phase".into(),
                    ));
                }
            }
        }
        if self.task_kind == TaskKind::GroupedTenLoss && self.n != 10 {
            return Err(Error::Config("grouped-ten-loss is a ten-loss task".into()));
        }
        if self.shared_dim > 0 && self.shared_dim < self.required_directions() {
            return Err(Error::Config(format!(
                "shared_dim {} cannot hold {} independent target directions",
                self.shared_dim,
                self.required_directions()
            )));
        }
        Ok(())
    }
}

/// The natural stage-grouping of the ten-loss task.
pub fn grouped_natural_groups() -> Vec<Vec<usize>> {
    vec![vec![0, 1, 2], vec![3, 4, 5], vec![6, 7, 8], vec![9]]
}

/// Noise multiplier on the off-phase decoy targets: the uninformative loss
/// sits visibly above the informative one, so the loss state itself tells
/// the controller which task is currently worth training.
const DECOY_NOISE_FACTOR: f64 = 2.0;

/// Residual strength of the shared signal in decoy targets. Keeping a weak
/// true component means the best down-weighting of an off-phase loss is a
/// moderate value rather than zero, away from the negative-sample penalty
/// region.
const DECOY_SIGNAL_MIX: f64 = 0.5;

/// Head features are amplified relative to backbone features so the heads
/// converge within the warmup epoch; their targets shrink by the same
/// factor, keeping the held-out signal split evenly between backbone and
/// head.
const HEAD_FEATURE_SCALE: f64 = 6.0;

fn gaussian_vec(dim: usize, rng: &mut RunRng) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn head_feature_vec(dim: usize, rng: &mut RunRng) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            HEAD_FEATURE_SCALE * z
        })
        .collect()
}

/// Orthonormal directions via Gram-Schmidt over Gaussian draws.
fn orthonormal_set(dim: usize, count: usize, rng: &mut RunRng) -> Vec<Vec<f64>> {
    let mut set: Vec<Vec<f64>> = Vec::with_capacity(count);
    while set.len() < count {
        let mut v = gaussian_vec(dim, rng);
        for u in &set {
            let proj: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            for (vi, ui) in v.iter_mut().zip(u) {
                *vi -= proj * ui;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            set.push(v);
        }
    }
    set
}

fn unit_vector(dim: usize, rng: &mut RunRng) -> Vec<f64> {
    let mut v = gaussian_vec(dim, rng);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 1e-12 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fixed data of one loss: features, train targets (plus the corrupted
/// variant for phase tasks) and the noiseless held-out split.
#[derive(Debug)]
struct TaskData {
    head_dim: usize,
    /// Generating head parameters; zero held-out head error at this point.
    #[allow(dead_code)]
    w_star: Vec<f64>,
    x: Vec<f64>,
    z: Vec<f64>,
    y: Vec<f64>,
    y_alt: Option<Vec<f64>>,
    val_x: Vec<f64>,
    val_z: Vec<f64>,
    val_y: Vec<f64>,
    /// Held-out error of the all-zero model; the score normalizer.
    ref_err: f64,
}

/// Immutable dataset shared by every model trained on the same spec.
#[derive(Debug)]
pub struct TraineeDataset {
    spec: TraineeSpec,
    tasks: Vec<TaskData>,
    /// Backbone parameters with zero held-out backbone error, when a single
    /// vector can satisfy every loss (the phase task's summed direction).
    #[allow(dead_code)]
    oracle_backbone: Option<Vec<f64>>,
}

impl TraineeDataset {
    fn build(spec: &TraineeSpec) -> Result<Arc<Self>> {
        spec.validate()?;
        let mut rng = derive_rng(spec.seed, &StreamId::Dataset);
        let d = spec.shared_dim;

        // Shared-target direction per loss, chosen by task family.
        let directions: Vec<Vec<f64>> = match spec.task_kind {
            TaskKind::StaticImbalance => {
                if d == 0 {
                    vec![Vec::new(); spec.n]
                } else {
                    orthonormal_set(d, spec.n, &mut rng)
                }
            }
            TaskKind::DynamicPhase => orthonormal_set(d, spec.n, &mut rng),
            TaskKind::GroupedTenLoss => {
                let groups = grouped_natural_groups();
                let dirs = orthonormal_set(d, groups.len(), &mut rng);
                let mut per_task = vec![Vec::new(); spec.n];
                for (g, members) in groups.iter().enumerate() {
                    for &i in members {
                        per_task[i] = dirs[g].clone();
                    }
                }
                per_task
            }
        };

        // The phase task scores every loss against the sum of the taught
        // directions: keeping what the early phase taught is worth as much
        // as learning the late phase.
        let val_direction: Option<Vec<f64>> = if spec.task_kind == TaskKind::DynamicPhase {
            let mut sum = vec![0.0; d];
            for dir in &directions {
                for (acc, v) in sum.iter_mut().zip(dir) {
                    *acc += v;
                }
            }
            Some(sum)
        } else {
            None
        };

        let mut tasks = Vec::with_capacity(spec.n);
        #[allow(clippy::needless_range_loop)]
        for i in 0..spec.n {
            let h = spec.head_dims[i];
            let u_star = &directions[i];
            let mut w_star = unit_vector(h, &mut rng);
            w_star.iter_mut().for_each(|w| *w /= HEAD_FEATURE_SCALE);

            let train = spec.train_samples;
            let x = gaussian_vec(train * d, &mut rng);
            let z = head_feature_vec(train * h, &mut rng);
            let mut y = Vec::with_capacity(train);
            for k in 0..train {
                let shared = if d == 0 { 0.0 } else { dot(&x[k * d..(k + 1) * d], u_star) };
                let head = dot(&z[k * h..(k + 1) * h], &w_star);
                let eps: f64 = StandardNormal.sample(&mut rng);
                y.push(shared + head + spec.noise[i] * eps);
            }

            // Off-phase decoy targets carry only the head signal, so
            // weighting a task during its uninformative phase pulls the
            // shared backbone toward zero and erodes what the other phase
            // taught. The head part stays honest so heads keep learning.
            let y_alt = if spec.task_kind == TaskKind::DynamicPhase {
                let mut alt = Vec::with_capacity(train);
                for k in 0..train {
                    let shared = if d == 0 { 0.0 } else { dot(&x[k * d..(k + 1) * d], u_star) };
                    let head = dot(&z[k * h..(k + 1) * h], &w_star);
                    let eps: f64 = StandardNormal.sample(&mut rng);
                    alt.push(
                        DECOY_SIGNAL_MIX * shared
                            + head
                            + DECOY_NOISE_FACTOR * spec.noise[i] * eps,
                    );
                }
                Some(alt)
            } else {
                None
            };

            let val = spec.val_samples;
            let val_x = gaussian_vec(val * d, &mut rng);
            let val_z = head_feature_vec(val * h, &mut rng);
            let val_dir = val_direction.as_ref().unwrap_or(u_star);
            let mut val_y = Vec::with_capacity(val);
            for k in 0..val {
                let shared = if d == 0 {
                    0.0
                } else {
                    dot(&val_x[k * d..(k + 1) * d], val_dir)
                };
                val_y.push(shared + dot(&val_z[k * h..(k + 1) * h], &w_star));
            }
            let ref_err = val_y.iter().map(|v| v * v).sum::<f64>() / val as f64;
            if ref_err < 1e-9 {
                return Err(Error::Config(format!(
                    "loss {i} has a degenerate held-out split (zero-model error {ref_err:.3e})"
                )));
            }

            tasks.push(TaskData {
                head_dim: h,
                w_star: w_star.clone(),
                x,
                z,
                y,
                y_alt,
                val_x,
                val_z,
                val_y,
                ref_err,
            });
        }

        Ok(Arc::new(Self {
            spec: spec.clone(),
            tasks,
            oracle_backbone: val_direction,
        }))
    }

    pub fn spec(&self) -> &TraineeSpec {
        &self.spec
    }
}

/// Per-iteration and interval-mean losses reported by one training interval.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalReport {
    /// Arithmetic mean of the per-iteration unweighted losses.
    pub mean: LossVector,
    pub per_iteration: Vec<Vec<f64>>,
}

/// Anything the orchestrator can train: synthetic tasks here, scripted stubs
/// in tests.
pub trait Trainee: Clone + Send {
    fn loss_count(&self) -> usize;

    /// Run `iterations` inner optimization steps under the given per-group
    /// weights and report the interval-mean (unweighted) losses.
    fn train_interval(
        &mut self,
        weights: &WeightVector,
        grouping: &LossGrouping,
        iterations: u32,
    ) -> Result<IntervalReport>;

    /// Held-out score in [0, 100]; higher is better. Deterministic.
    fn evaluate(&self) -> f64;

    /// Broadcast: copy the source's parameters, optimizer counters and decay
    /// position bit-exactly, keeping this trainee's own data-order stream.
    fn sync_from(&mut self, source: &Self) -> Result<()>;

    /// Replace the data-order stream (used to give population members
    /// distinct orderings).
    fn set_data_stream(&mut self, rng: RunRng, label: String);

    fn rng_label(&self) -> &str;

    /// Order-stable hash of the trainable state, for broadcast checks.
    fn state_digest(&self) -> u64;
}

/// A synthetic trainee: shared linear backbone, one linear head per loss,
/// plain SGD with cosine learning-rate decay. Minibatches walk a per-task
/// shuffled order, reshuffled once per pass, so one epoch is one pass over
/// the training set.
#[derive(Debug, Clone)]
pub struct SyntheticTrainee {
    data: Arc<TraineeDataset>,
    shared: Vec<f64>,
    heads: Vec<Vec<f64>>,
    step: u64,
    order: Vec<Vec<u32>>,
    cursor: Vec<usize>,
    rng: RunRng,
    rng_label: String,
}

/// Deterministically initialized trainee for the given spec. Two calls with
/// equal `(spec, seed)` produce identical states; the dataset itself depends
/// only on `spec.seed`.
pub fn make_trainee(spec: &TraineeSpec, seed: u64) -> Result<SyntheticTrainee> {
    let data = TraineeDataset::build(spec)?;
    let heads = spec.head_dims.iter().map(|h| vec![0.0; *h]).collect();
    Ok(SyntheticTrainee {
        shared: vec![0.0; spec.shared_dim],
        heads,
        step: 0,
        order: vec![(0..spec.train_samples as u32).collect(); spec.n],
        // Exhausted cursors force a shuffle from the data stream on first use.
        cursor: vec![spec.train_samples; spec.n],
        rng: derive_rng(seed, &StreamId::PrimaryData),
        rng_label: StreamId::PrimaryData.label(),
        data,
    })
}

impl SyntheticTrainee {
    pub fn spec(&self) -> &TraineeSpec {
        self.data.spec()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Current backbone parameters, for inspection.
    pub fn backbone(&self) -> &[f64] {
        &self.shared
    }

    /// Current per-loss head parameters, for inspection.
    pub fn heads(&self) -> &[Vec<f64>] {
        &self.heads
    }

    fn learning_rate(&self) -> f64 {
        let spec = self.data.spec();
        let floor = LR_FLOOR_FRACTION * spec.inner_lr;
        let progress = (self.step.min(spec.horizon_steps) as f64) / spec.horizon_steps as f64;
        floor + 0.5 * (spec.inner_lr - floor) * (1.0 + (std::f64::consts::PI * progress).cos())
    }

    /// Whether loss `i` currently trains on its corrupted targets.
    fn uses_alt_targets(&self, task: usize) -> bool {
        let spec = self.data.spec();
        match (spec.task_kind, spec.phase_switch_step) {
            (TaskKind::DynamicPhase, Some(switch)) => {
                let first_half_task = task < spec.n / 2;
                if self.step < switch {
                    !first_half_task
                } else {
                    first_half_task
                }
            }
            _ => false,
        }
    }

    fn target(&self, task: usize, sample: usize) -> f64 {
        let data = &self.data.tasks[task];
        if self.uses_alt_targets(task) {
            data.y_alt.as_ref().expect("dynamic task has alt targets")[sample]
        } else {
            data.y[sample]
        }
    }

    /// Next minibatch of sample indices for one task, reshuffling the task's
    /// order whenever a pass completes. Each shuffle starts from the
    /// identity so the order depends only on the stream, not on history.
    fn next_batch(&mut self, task: usize, out: &mut [usize]) {
        let len = self.order[task].len();
        for slot in out.iter_mut() {
            if self.cursor[task] >= len {
                for (i, v) in self.order[task].iter_mut().enumerate() {
                    *v = i as u32;
                }
                self.order[task].shuffle(&mut self.rng);
                self.cursor[task] = 0;
            }
            *slot = self.order[task][self.cursor[task]] as usize;
            self.cursor[task] += 1;
        }
    }

    /// Full-training-set unweighted losses at the current parameters, using
    /// the targets currently in effect. Consumes no randomness.
    pub fn losses_on_train_set(&self) -> LossVector {
        let spec = self.data.spec();
        let d = spec.shared_dim;
        let values: Vec<f64> = (0..spec.n)
            .map(|i| {
                let data = &self.data.tasks[i];
                let h = data.head_dim;
                let mut sum = 0.0;
                for k in 0..spec.train_samples {
                    let pred = if d == 0 {
                        dot(&data.z[k * h..(k + 1) * h], &self.heads[i])
                    } else {
                        dot(&data.x[k * d..(k + 1) * d], &self.shared)
                            + dot(&data.z[k * h..(k + 1) * h], &self.heads[i])
                    };
                    let r = pred - self.target(i, k);
                    sum += r * r;
                }
                spec.scales[i] * sum / spec.train_samples as f64
            })
            .collect();
        LossVector::new(values).expect("train losses are finite and nonnegative")
    }

    fn check_finite(&self, losses: &[f64], t: u32) -> Result<()> {
        if losses.iter().all(|l| l.is_finite())
            && self.shared.iter().all(|v| v.is_finite())
            && self.heads.iter().flatten().all(|v| v.is_finite())
        {
            Ok(())
        } else {
            let task = losses.iter().position(|l| !l.is_finite());
            Err(Error::Divergence(format!(
                "non-finite value at step {} (interval iteration {t}{})",
                self.step,
                task.map(|i| format!(", loss {i}")).unwrap_or_default()
            )))
        }
    }
}

impl Trainee for SyntheticTrainee {
    fn loss_count(&self) -> usize {
        self.data.spec().n
    }

    fn train_interval(
        &mut self,
        weights: &WeightVector,
        grouping: &LossGrouping,
        iterations: u32,
    ) -> Result<IntervalReport> {
        let dataset = Arc::clone(&self.data);
        let spec = dataset.spec();
        if grouping.raw_len() != spec.n {
            return Err(Error::Dimension(format!(
                "grouping covers {} losses, trainee has {}",
                grouping.raw_len(),
                spec.n
            )));
        }
        if weights.len() != grouping.effective_len() {
            return Err(Error::Dimension(format!(
                "loss dimension mismatch: {} weights for {} effective losses",
                weights.len(),
                grouping.effective_len()
            )));
        }
        if !weights.is_applied(WEIGHT_FLOOR) {
            return Err(Error::Config(format!(
                "applied weights must clear the positivity floor {WEIGHT_FLOOR}"
            )));
        }

        let d = spec.shared_dim;
        let batch = spec.batch_size;
        let inv_batch = 1.0 / batch as f64;
        let mut per_iteration = Vec::with_capacity(iterations as usize);
        let mut sums = vec![0.0; spec.n];
        let mut batch_idx = vec![0usize; batch];

        for it in 0..iterations {
            let lr = self.learning_rate();
            let mut grad_shared = vec![0.0; d];
            let mut grad_heads: Vec<Vec<f64>> =
                spec.head_dims.iter().map(|h| vec![0.0; *h]).collect();
            let mut losses = vec![0.0; spec.n];

            for i in 0..spec.n {
                let group = grouping.group_of(i);
                let group_weight = weights.values()[group];
                let group_share = 1.0 / grouping.group_size(group) as f64;
                self.next_batch(i, &mut batch_idx);
                let data = &dataset.tasks[i];
                let h = data.head_dim;
                let mut loss_sum = 0.0;
                for &k in &batch_idx {
                    let xk = &data.x[k * d..(k + 1) * d];
                    let zk = &data.z[k * h..(k + 1) * h];
                    let pred = if d == 0 {
                        dot(zk, &self.heads[i])
                    } else {
                        dot(xk, &self.shared) + dot(zk, &self.heads[i])
                    };
                    let r = pred - self.target(i, k);
                    loss_sum += r * r;
                    let g = 2.0 * spec.scales[i] * r * inv_batch;
                    // Weights steer the shared backbone; the head learning
                    // rate is rescaled by 1/lambda, which cancels the weight
                    // exactly, so heads see the unweighted gradient.
                    for (gs, x) in grad_shared.iter_mut().zip(xk) {
                        *gs += group_weight * group_share * g * x;
                    }
                    for (gw, z) in grad_heads[i].iter_mut().zip(zk) {
                        *gw += group_share * g * z;
                    }
                }
                losses[i] = spec.scales[i] * loss_sum * inv_batch;
            }

            for (u, g) in self.shared.iter_mut().zip(&grad_shared) {
                *u -= lr * g;
            }
            for (head, g) in self.heads.iter_mut().zip(&grad_heads) {
                for (w, gi) in head.iter_mut().zip(g) {
                    *w -= lr * gi;
                }
            }
            self.step += 1;
            self.check_finite(&losses, it)?;
            for (s, l) in sums.iter_mut().zip(&losses) {
                *s += l;
            }
            per_iteration.push(losses);
        }

        let mean: Vec<f64> = sums.iter().map(|s| s / f64::from(iterations)).collect();
        Ok(IntervalReport {
            mean: LossVector::new(mean)?,
            per_iteration,
        })
    }

    fn evaluate(&self) -> f64 {
        let spec = self.data.spec();
        let d = spec.shared_dim;
        let mut total = 0.0;
        for i in 0..spec.n {
            let data = &self.data.tasks[i];
            let h = data.head_dim;
            let mut err = 0.0;
            for k in 0..spec.val_samples {
                let pred = if d == 0 {
                    dot(&data.val_z[k * h..(k + 1) * h], &self.heads[i])
                } else {
                    dot(&data.val_x[k * d..(k + 1) * d], &self.shared)
                        + dot(&data.val_z[k * h..(k + 1) * h], &self.heads[i])
                };
                let r = pred - data.val_y[k];
                err += r * r;
            }
            total += err / (spec.val_samples as f64 * data.ref_err);
        }
        (100.0 * (1.0 - total / spec.n as f64)).clamp(0.0, 100.0)
    }

    fn sync_from(&mut self, source: &Self) -> Result<()> {
        let same_data = Arc::ptr_eq(&self.data, &source.data)
            || self.data.spec() == source.data.spec();
        if !same_data {
            return Err(Error::SpecMismatch(format!(
                "{} vs {}",
                self.data.spec().task_kind.as_str(),
                source.data.spec().task_kind.as_str()
            )));
        }
        self.shared = source.shared.clone();
        self.heads = source.heads.clone();
        self.step = source.step;
        Ok(())
    }

    fn set_data_stream(&mut self, rng: RunRng, label: String) {
        self.rng = rng;
        self.rng_label = label;
        // Force a reshuffle so the new stream fully determines the order.
        for c in self.cursor.iter_mut() {
            *c = usize::MAX;
        }
    }

    fn rng_label(&self) -> &str {
        &self.rng_label
    }

    fn state_digest(&self) -> u64 {
        let mut hash = 0xcbf2_9ce4_8422_2325u64;
        let mut push = |bits: u64| {
            hash ^= bits;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        };
        for v in &self.shared {
            push(v.to_bits());
        }
        for head in &self.heads {
            for v in head {
                push(v.to_bits());
            }
        }
        push(self.step);
        hash
    }
}
