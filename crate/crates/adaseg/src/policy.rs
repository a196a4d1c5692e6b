//! The weight controller's policy network: a three-affine-layer MLP
//! (n -> 16 -> 16 -> n, rectifier on the hidden layers) with hand-derived
//! gradients, the loss-to-weight transform, and an Adam optimizer with
//! decoupled weight decay.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RunRng;
use crate::types::{LossVector, WeightVector, LOSS_FLOOR};

/// Hidden layer width.
pub const HIDDEN_DIM: usize = 16;
/// Standard deviation of the weight-matrix initialization around 1/n_c.
pub const INIT_STD: f64 = 0.01;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// One affine layer, row-major `rows x cols` weights plus a bias per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub rows: usize,
    pub cols: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Affine {
    /// Weight entries drawn from Normal(1/cols, INIT_STD); biases exactly 0.
    /// The positive mean keeps initial weight predictions near a uniform
    /// positive profile.
    fn init(rows: usize, cols: usize, rng: &mut RunRng) -> Self {
        let mean = 1.0 / cols as f64;
        let weight = (0..rows * cols)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                mean + INIT_STD * z
            })
            .collect();
        Self {
            rows,
            cols,
            weight,
            bias: vec![0.0; rows],
        }
    }

    fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            weight: vec![0.0; rows * cols],
            bias: vec![0.0; rows],
        }
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.rows, self.cols)
    }

    /// Apply the layer: `W x + b`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        let mut out = self.bias.clone();
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.weight[r * self.cols..(r + 1) * self.cols];
            *o += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
        out
    }

    fn is_finite(&self) -> bool {
        self.weight.iter().all(|w| w.is_finite()) && self.bias.iter().all(|b| b.is_finite())
    }

    fn sq_norm(&self) -> f64 {
        self.weight.iter().map(|w| w * w).sum::<f64>() + self.bias.iter().map(|b| b * b).sum::<f64>()
    }
}

fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.max(0.0)).collect()
}

/// Intermediate activations of one forward pass, kept for backpropagation.
struct ForwardTrace {
    z1: Vec<f64>,
    h1: Vec<f64>,
    z2: Vec<f64>,
    h2: Vec<f64>,
    eta: Vec<f64>,
}

/// Gradient with the same shapes as [`PolicyParams`].
#[derive(Debug, Clone)]
pub struct PolicyGrad {
    pub layers: Vec<Affine>,
}

impl PolicyGrad {
    pub fn l2_norm(&self) -> f64 {
        self.layers.iter().map(Affine::sq_norm).sum::<f64>().sqrt()
    }

    fn negate(&mut self) {
        for layer in &mut self.layers {
            for w in &mut layer.weight {
                *w = -*w;
            }
            for b in &mut layer.bias {
                *b = -*b;
            }
        }
    }

    /// Name of the first layer holding a non-finite entry, if any.
    fn first_non_finite_layer(&self) -> Option<String> {
        self.layers
            .iter()
            .position(|l| !l.is_finite())
            .map(|i| format!("layer{}", i + 1))
    }
}

/// Parameters of the controller MLP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub layers: Vec<Affine>,
}

impl PolicyParams {
    /// Fresh policy for an `n`-dimensional loss vector. Weight matrices are
    /// initialized around 1/n_c (n_c = layer input width) so the initial
    /// predicted weights stay positive; biases start at zero.
    pub fn init(n: usize, rng: &mut RunRng) -> Self {
        assert!(n >= 1, "policy needs at least one loss dimension");
        Self {
            layers: vec![
                Affine::init(HIDDEN_DIM, n, rng),
                Affine::init(HIDDEN_DIM, HIDDEN_DIM, rng),
                Affine::init(n, HIDDEN_DIM, rng),
            ],
        }
    }

    /// Policy that maps any nonnegative loss vector to itself, i.e. predicts
    /// unit weights. Requires n <= HIDDEN_DIM.
    pub fn identity(n: usize) -> Self {
        assert!(n <= HIDDEN_DIM);
        let mut l1 = Affine::zeros(HIDDEN_DIM, n);
        let mut l2 = Affine::zeros(HIDDEN_DIM, HIDDEN_DIM);
        let mut l3 = Affine::zeros(n, HIDDEN_DIM);
        for i in 0..n {
            l1.weight[i * n + i] = 1.0;
            l3.weight[i * HIDDEN_DIM + i] = 1.0;
        }
        for i in 0..HIDDEN_DIM {
            l2.weight[i * HIDDEN_DIM + i] = 1.0;
        }
        Self {
            layers: vec![l1, l2, l3],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols
    }

    pub fn output_dim(&self) -> usize {
        self.layers[2].rows
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "policy expects {} losses, got {}",
                self.input_dim(),
                input.len()
            )));
        }
        if !input.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("policy input".into()));
        }
        Ok(())
    }

    fn forward_trace(&self, input: &[f64]) -> ForwardTrace {
        let z1 = self.layers[0].apply(input);
        let h1 = relu(&z1);
        let z2 = self.layers[1].apply(&h1);
        let h2 = relu(&z2);
        let eta = self.layers[2].apply(&h2);
        ForwardTrace { z1, h1, z2, h2, eta }
    }

    /// Estimated weighted loss eta = pi(l; theta).
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        Ok(self.forward_trace(input).eta)
    }

    /// Recover the predicted weight vector: eta divided elementwise by the
    /// floored loss, so a zero loss cannot divide out.
    pub fn weights_from_losses(&self, losses: &LossVector) -> Result<WeightVector> {
        let eta = self.forward(losses.values())?;
        let values = eta
            .iter()
            .zip(losses.values())
            .map(|(e, l)| e / l.max(LOSS_FLOOR))
            .collect();
        WeightVector::new(values)
    }

    /// Backpropagate a gradient on eta down to all parameters.
    #[allow(clippy::needless_range_loop)]
    fn backprop(&self, input: &[f64], trace: &ForwardTrace, g_eta: &[f64]) -> PolicyGrad {
        let n_out = self.output_dim();
        let mut g3 = self.layers[2].zeros_like();
        let mut g_h2 = [0.0; HIDDEN_DIM];
        for k in 0..n_out {
            g3.bias[k] = g_eta[k];
            for j in 0..HIDDEN_DIM {
                g3.weight[k * HIDDEN_DIM + j] = g_eta[k] * trace.h2[j];
                g_h2[j] += self.layers[2].weight[k * HIDDEN_DIM + j] * g_eta[k];
            }
        }

        let mut g2 = self.layers[1].zeros_like();
        let mut g_h1 = [0.0; HIDDEN_DIM];
        for j in 0..HIDDEN_DIM {
            let g_z2 = if trace.z2[j] > 0.0 { g_h2[j] } else { 0.0 };
            g2.bias[j] = g_z2;
            for i in 0..HIDDEN_DIM {
                g2.weight[j * HIDDEN_DIM + i] = g_z2 * trace.h1[i];
                g_h1[i] += self.layers[1].weight[j * HIDDEN_DIM + i] * g_z2;
            }
        }

        let n_in = self.input_dim();
        let mut g1 = self.layers[0].zeros_like();
        for j in 0..HIDDEN_DIM {
            let g_z1 = if trace.z1[j] > 0.0 { g_h1[j] } else { 0.0 };
            g1.bias[j] = g_z1;
            for p in 0..n_in {
                g1.weight[j * n_in + p] = g_z1 * input[p];
            }
        }

        PolicyGrad {
            layers: vec![g1, g2, g3],
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.layers.iter().map(Affine::sq_norm).sum::<f64>().sqrt()
    }
}

/// Gradient of the log isotropic Normal density with respect to its mean:
/// (sample - mu) / sigma^2, elementwise.
pub fn log_density_grad_mu(sample: &[f64], mu: &[f64], sigma: f64) -> Vec<f64> {
    assert_eq!(sample.len(), mu.len());
    assert!(sigma > 0.0, "sigma must be positive");
    let inv_var = 1.0 / (sigma * sigma);
    sample
        .iter()
        .zip(mu)
        .map(|(s, m)| (s - m) * inv_var)
        .collect()
}

/// Log of the isotropic Normal density up to its mu-independent constant.
/// Only used by finite-difference oracles in tests; kept here so the exact
/// surrogate is defined next to the analytic gradient it checks.
pub fn log_density_unnormalized(sample: &[f64], mu: &[f64], sigma: f64) -> f64 {
    assert_eq!(sample.len(), mu.len());
    let inv_var = 1.0 / (sigma * sigma);
    -0.5 * inv_var
        * sample
            .iter()
            .zip(mu)
            .map(|(s, m)| (s - m) * (s - m))
            .sum::<f64>()
}

/// Ascent gradient of the expected-reward objective
/// R(theta) = (1/m) sum_j r_j log s(sample_j; mu(theta), sigma),
/// with mu(theta) the predicted weight vector for the given loss state.
pub fn reinforce_gradient(
    params: &PolicyParams,
    losses: &LossVector,
    samples: &[WeightVector],
    rewards: &[f64],
    sigma: f64,
) -> Result<PolicyGrad> {
    if samples.is_empty() || samples.len() != rewards.len() {
        return Err(Error::Dimension(format!(
            "reinforce needs matching samples and rewards, got {} and {}",
            samples.len(),
            rewards.len()
        )));
    }
    params.check_input(losses.values())?;
    let n = params.input_dim();
    let m = samples.len() as f64;
    let trace = params.forward_trace(losses.values());
    let mu: Vec<f64> = trace
        .eta
        .iter()
        .zip(losses.values())
        .map(|(e, l)| e / l.max(LOSS_FLOOR))
        .collect();

    // Reward-weighted mean of the per-candidate log-density gradients wrt mu.
    let mut g_mu = vec![0.0; n];
    for (sample, reward) in samples.iter().zip(rewards) {
        if sample.len() != n {
            return Err(Error::Dimension(format!(
                "candidate has {} components, policy expects {n}",
                sample.len()
            )));
        }
        let g = log_density_grad_mu(sample.values(), &mu, sigma);
        for (acc, gi) in g_mu.iter_mut().zip(g) {
            *acc += reward * gi / m;
        }
    }

    // mu = eta / max(l, floor): the division is a constant diagonal scaling.
    let g_eta: Vec<f64> = g_mu
        .iter()
        .zip(losses.values())
        .map(|(g, l)| g / l.max(LOSS_FLOOR))
        .collect();

    Ok(params.backprop(losses.values(), &trace, &g_eta))
}

/// First- and second-moment accumulators plus the step counter for Adam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    m: Vec<Affine>,
    v: Vec<Affine>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &PolicyParams) -> Self {
        let zeros: Vec<Affine> = params.layers.iter().map(Affine::zeros_like).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// One Adam descent step on the given gradient, with decoupled weight decay
/// applied to the weight matrices only (biases stay undecayed).
pub fn adam_step(
    params: &mut PolicyParams,
    state: &mut AdamState,
    grad: &PolicyGrad,
    lr: f64,
    weight_decay: f64,
) {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);

    for (i, layer) in params.layers.iter_mut().enumerate() {
        let g = &grad.layers[i];
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        for (((p, gw), mw), vw) in layer
            .weight
            .iter_mut()
            .zip(&g.weight)
            .zip(m.weight.iter_mut())
            .zip(v.weight.iter_mut())
        {
            *mw = ADAM_BETA1 * *mw + (1.0 - ADAM_BETA1) * gw;
            *vw = ADAM_BETA2 * *vw + (1.0 - ADAM_BETA2) * gw * gw;
            let m_hat = *mw / bc1;
            let v_hat = *vw / bc2;
            let decay = weight_decay * *p;
            *p -= lr * (m_hat / (v_hat.sqrt() + ADAM_EPS) + decay);
        }
        for (((p, gb), mb), vb) in layer
            .bias
            .iter_mut()
            .zip(&g.bias)
            .zip(m.bias.iter_mut())
            .zip(v.bias.iter_mut())
        {
            *mb = ADAM_BETA1 * *mb + (1.0 - ADAM_BETA1) * gb;
            *vb = ADAM_BETA2 * *vb + (1.0 - ADAM_BETA2) * gb * gb;
            let m_hat = *mb / bc1;
            let v_hat = *vb / bc2;
            *p -= lr * (m_hat / (v_hat.sqrt() + ADAM_EPS));
        }
    }
}

/// Diagnostics from one policy update.
#[derive(Debug, Clone, Copy)]
pub struct ReinforceStats {
    pub grad_norm: f64,
    pub params_norm: f64,
}

/// One REINFORCE step: ascend R(theta) (as an Adam descent step on -R) using
/// the raw candidates and the loss state that generated them. A non-finite
/// gradient aborts the update, naming the offending layer.
#[allow(clippy::too_many_arguments)]
pub fn reinforce_update(
    params: &mut PolicyParams,
    adam: &mut AdamState,
    losses: &LossVector,
    samples: &[WeightVector],
    rewards: &[f64],
    sigma: f64,
    lr: f64,
    weight_decay: f64,
) -> Result<ReinforceStats> {
    let mut grad = reinforce_gradient(params, losses, samples, rewards, sigma)?;
    if let Some(layer) = grad.first_non_finite_layer() {
        return Err(Error::GradientOverflow { layer });
    }
    let grad_norm = grad.l2_norm();
    grad.negate();
    adam_step(params, adam, &grad, lr, weight_decay);
    Ok(ReinforceStats {
        grad_norm,
        params_norm: params.l2_norm(),
    })
}

/// Frozen copy of the policy after the update at checkpoint `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySnapshot {
    pub t: u32,
    pub params: PolicyParams,
    /// Identifier of the random stream that drove the surrounding step.
    pub rng_id: String,
}
