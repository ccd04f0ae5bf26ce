//! The traversal policy: a 3-20-2 network (tanh hidden layer, softmax
//! output) trained by binary cross-entropy warm start and then REINFORCE,
//! both through Adam.
//!
//! Parameters live in one flat vector:
//! `W1` (20x3, row-major) | `b1` (20) | `W2` (2x20, row-major) | `b2` (2).
//! Output 0 is the include probability, output 1 the stop probability.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Action, ActionPolicy, EnvError, EnvState, Transition};

pub const INPUT: usize = 3;
pub const HIDDEN: usize = 20;
pub const OUTPUT: usize = 2;
pub const PARAM_COUNT: usize = HIDDEN * INPUT + HIDDEN + OUTPUT * HIDDEN + OUTPUT;

const B1: usize = HIDDEN * INPUT;
const W2: usize = B1 + HIDDEN;
const B2: usize = W2 + OUTPUT * HIDDEN;

/// Floor applied to probabilities inside logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("non-finite input")]
    NonFinite,
    #[error("expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("no warm-start samples")]
    EmptySamples,
    #[error("empty trajectory")]
    EmptyTrajectory,
    #[error("invalid training config: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyNet {
    pub params: Vec<f64>,
    pub adam: AdamState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub gamma: f64,
    pub ws_episodes: usize,
    pub pg_episodes: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { lr: 0.001, gamma: 0.99, ws_episodes: 1000, pg_episodes: 100, seed: 42 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(PolicyError::InvalidConfig("discount must lie in (0, 1]"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(PolicyError::InvalidConfig("learning rate must be positive"));
        }
        Ok(())
    }
}

/// A visited state with its supervision label.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledState {
    pub state: EnvState,
    /// 1 when the memory is one of the question's required memories.
    pub label: u8,
}

struct Activations {
    input: [f64; INPUT],
    hidden: [f64; HIDDEN],
    probs: [f64; OUTPUT],
}

impl PolicyNet {
    /// Parameters drawn from uniform(-0.1, 0.1).
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = (0..PARAM_COUNT).map(|_| rng.gen_range(-0.1..0.1)).collect();
        PolicyNet { params, adam: AdamState::new(PARAM_COUNT) }
    }

    pub fn zeros() -> Self {
        PolicyNet { params: vec![0.0; PARAM_COUNT], adam: AdamState::new(PARAM_COUNT) }
    }

    pub fn from_params(params: Vec<f64>) -> Result<Self, PolicyError> {
        if params.len() != PARAM_COUNT {
            return Err(PolicyError::ShapeMismatch { expected: PARAM_COUNT, got: params.len() });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(PolicyError::NonFinite);
        }
        Ok(PolicyNet { params, adam: AdamState::new(PARAM_COUNT) })
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    fn activations(&self, state: &EnvState) -> Result<Activations, PolicyError> {
        let input = state.as_array();
        if input.iter().any(|x| !x.is_finite()) {
            return Err(PolicyError::NonFinite);
        }
        let p = &self.params;
        let mut hidden = [0.0; HIDDEN];
        for (i, h) in hidden.iter_mut().enumerate() {
            let mut z = p[B1 + i];
            for j in 0..INPUT {
                z += p[i * INPUT + j] * input[j];
            }
            *h = libm::tanh(z);
        }
        let mut logits = [0.0; OUTPUT];
        for (o, l) in logits.iter_mut().enumerate() {
            let mut z = p[B2 + o];
            for i in 0..HIDDEN {
                z += p[W2 + o * HIDDEN + i] * hidden[i];
            }
            *l = z;
        }
        let max = logits[0].max(logits[1]);
        let e = [libm::exp(logits[0] - max), libm::exp(logits[1] - max)];
        let sum = e[0] + e[1];
        Ok(Activations { input, hidden, probs: [e[0] / sum, e[1] / sum] })
    }

    /// `(p_include, p_stop)`.
    pub fn forward(&self, state: &EnvState) -> Result<(f64, f64), PolicyError> {
        let a = self.activations(state)?;
        Ok((a.probs[0], a.probs[1]))
    }

    pub fn prob(&self, state: &EnvState, action: Action) -> Result<f64, PolicyError> {
        let (inc, stop) = self.forward(state)?;
        Ok(match action {
            Action::Include => inc,
            Action::Stop => stop,
        })
    }

    /// Adds `scale * d ln pi(action | state) / d params` into `grad`.
    fn accumulate_log_prob_grad(&self, state: &EnvState, action: Action, scale: f64, grad: &mut [f64]) -> Result<(), PolicyError> {
        let a = self.activations(state)?;
        let p = &self.params;
        let taken = action.index();
        let mut dz = [0.0; OUTPUT];
        for (o, d) in dz.iter_mut().enumerate() {
            *d = scale * (if o == taken { 1.0 } else { 0.0 } - a.probs[o]);
        }
        for o in 0..OUTPUT {
            grad[B2 + o] += dz[o];
            for i in 0..HIDDEN {
                grad[W2 + o * HIDDEN + i] += dz[o] * a.hidden[i];
            }
        }
        for i in 0..HIDDEN {
            let back: f64 = (0..OUTPUT).map(|o| dz[o] * p[W2 + o * HIDDEN + i]).sum();
            let dpre = back * (1.0 - a.hidden[i] * a.hidden[i]);
            grad[B1 + i] += dpre;
            for j in 0..INPUT {
                grad[i * INPUT + j] += dpre * a.input[j];
            }
        }
        Ok(())
    }

    /// Greedy action: include when it is strictly more likely than stopping.
    pub fn greedy(&self, state: &EnvState) -> Result<Action, PolicyError> {
        let (inc, stop) = self.forward(state)?;
        Ok(if inc > stop { Action::Include } else { Action::Stop })
    }
}

fn ln_clamped(p: f64) -> f64 {
    libm::log(p.clamp(PROB_FLOOR, 1.0))
}

fn label_action(label: u8) -> Action {
    if label == 1 {
        Action::Include
    } else {
        Action::Stop
    }
}

/// Mean binary cross-entropy with `P = p_include`.
pub fn bce_loss(net: &PolicyNet, samples: &[LabeledState]) -> Result<f64, PolicyError> {
    if samples.is_empty() {
        return Err(PolicyError::EmptySamples);
    }
    let mut total = 0.0;
    for s in samples {
        let (inc, stop) = net.forward(&s.state)?;
        let y = s.label as f64;
        total -= y * ln_clamped(inc) + (1.0 - y) * ln_clamped(stop);
    }
    Ok(total / samples.len() as f64)
}

/// Gradient of [`bce_loss`].
pub fn bce_gradient(net: &PolicyNet, samples: &[LabeledState]) -> Result<Vec<f64>, PolicyError> {
    if samples.is_empty() {
        return Err(PolicyError::EmptySamples);
    }
    let mut grad = vec![0.0; PARAM_COUNT];
    let scale = -1.0 / samples.len() as f64;
    for s in samples {
        // 1 - p_include is p_stop, so each term is -ln pi(label action).
        net.accumulate_log_prob_grad(&s.state, label_action(s.label), scale, &mut grad)?;
    }
    Ok(grad)
}

/// `G_t = r_t + gamma * G_{t+1}`.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut g = 0.0;
    for (t, r) in rewards.iter().enumerate().rev() {
        g = r + gamma * g;
        out[t] = g;
    }
    out
}

/// `-sum_t G_t ln pi(a_t | s_t)`.
pub fn reinforce_loss(net: &PolicyNet, trajectory: &[Transition], gamma: f64) -> Result<f64, PolicyError> {
    let rewards: Vec<f64> = trajectory.iter().map(|t| t.reward).collect();
    let returns = discounted_returns(&rewards, gamma);
    let mut loss = 0.0;
    for (t, g) in trajectory.iter().zip(&returns) {
        loss -= g * ln_clamped(net.prob(&t.state, t.action)?);
    }
    Ok(loss)
}

/// Gradient of [`reinforce_loss`].
pub fn reinforce_gradient(net: &PolicyNet, trajectory: &[Transition], gamma: f64) -> Result<Vec<f64>, PolicyError> {
    let rewards: Vec<f64> = trajectory.iter().map(|t| t.reward).collect();
    let returns = discounted_returns(&rewards, gamma);
    let mut grad = vec![0.0; PARAM_COUNT];
    for (t, g) in trajectory.iter().zip(&returns) {
        if *g != 0.0 {
            net.accumulate_log_prob_grad(&t.state, t.action, -g, &mut grad)?;
        }
    }
    Ok(grad)
}

/// One bias-corrected Adam update of `params`.
pub fn adam_step(params: &mut [f64], state: &mut AdamState, grads: &[f64], lr: f64) -> Result<(), PolicyError> {
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(PolicyError::ShapeMismatch { expected: params.len(), got: grads.len() });
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(PolicyError::NonFinite);
    }
    state.t += 1;
    let t = state.t as f64;
    let c1 = 1.0 - libm::pow(ADAM_BETA1, t);
    let c2 = 1.0 - libm::pow(ADAM_BETA2, t);
    for i in 0..params.len() {
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * grads[i];
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * grads[i] * grads[i];
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (libm::sqrt(v_hat) + ADAM_EPS);
    }
    Ok(())
}

impl PolicyNet {
    pub fn apply_gradient(&mut self, grads: &[f64], lr: f64) -> Result<(), PolicyError> {
        adam_step(&mut self.params, &mut self.adam, grads, lr)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WarmStartReport {
    /// Mean loss before each episode's update.
    pub losses: Vec<f64>,
    pub final_loss: f64,
    pub accuracy: f64,
}

/// Fraction of samples whose greedy action matches the label.
pub fn accuracy(net: &PolicyNet, samples: &[LabeledState]) -> Result<f64, PolicyError> {
    if samples.is_empty() {
        return Err(PolicyError::EmptySamples);
    }
    let mut hits = 0usize;
    for s in samples {
        if net.greedy(&s.state)? == label_action(s.label) {
            hits += 1;
        }
    }
    Ok(hits as f64 / samples.len() as f64)
}

/// Warm start: each episode is one full-batch Adam step on the BCE loss.
pub fn warm_start(net: &mut PolicyNet, samples: &[LabeledState], config: &TrainConfig) -> Result<WarmStartReport, PolicyError> {
    config.validate()?;
    if samples.is_empty() {
        return Err(PolicyError::EmptySamples);
    }
    let mut losses = Vec::with_capacity(config.ws_episodes);
    for _ in 0..config.ws_episodes {
        losses.push(bce_loss(net, samples)?);
        let grad = bce_gradient(net, samples)?;
        net.apply_gradient(&grad, config.lr)?;
    }
    Ok(WarmStartReport { losses, final_loss: bce_loss(net, samples)?, accuracy: accuracy(net, samples)? })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PgStep {
    /// Discounted return from the first step.
    pub return_0: f64,
    pub loss: f64,
    pub updated: bool,
}

/// One REINFORCE update from a finished trajectory. Trajectories whose
/// returns are all zero carry no gradient and leave the network (including
/// the Adam moments) untouched.
pub fn pg_update(net: &mut PolicyNet, trajectory: &[Transition], config: &TrainConfig) -> Result<PgStep, PolicyError> {
    config.validate()?;
    if trajectory.is_empty() {
        return Err(PolicyError::EmptyTrajectory);
    }
    let rewards: Vec<f64> = trajectory.iter().map(|t| t.reward).collect();
    let returns = discounted_returns(&rewards, config.gamma);
    let loss = reinforce_loss(net, trajectory, config.gamma)?;
    let updated = returns.iter().any(|g| *g != 0.0);
    if updated {
        let grad = reinforce_gradient(net, trajectory, config.gamma)?;
        net.apply_gradient(&grad, config.lr)?;
    }
    Ok(PgStep { return_0: returns[0], loss, updated })
}

#[derive(Clone, Debug)]
pub enum Mode {
    Greedy,
    Sample(Box<ChaCha8Rng>),
}

/// A network driving episodes.
#[derive(Clone, Debug)]
pub struct NetPolicy<'a> {
    pub net: &'a PolicyNet,
    pub mode: Mode,
}

impl<'a> NetPolicy<'a> {
    pub fn greedy(net: &'a PolicyNet) -> Self {
        NetPolicy { net, mode: Mode::Greedy }
    }

    pub fn sampling(net: &'a PolicyNet, seed: u64) -> Self {
        NetPolicy { net, mode: Mode::Sample(Box::new(ChaCha8Rng::seed_from_u64(seed))) }
    }
}

impl ActionPolicy for NetPolicy<'_> {
    fn decide(&mut self, state: &EnvState) -> Result<Action, EnvError> {
        let policy_err = |e: PolicyError| EnvError::Policy(alloc::string::ToString::to_string(&e));
        match &mut self.mode {
            Mode::Greedy => self.net.greedy(state).map_err(policy_err),
            Mode::Sample(rng) => {
                let (inc, _) = self.net.forward(state).map_err(policy_err)?;
                Ok(if rng.gen::<f64>() < inc { Action::Include } else { Action::Stop })
            }
        }
    }
}
