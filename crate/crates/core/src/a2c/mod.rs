//! Advantage actor-critic agent.
//!
//! A single fully-connected hidden layer feeds two heads: a two-way softmax
//! over {Send, Silent} and a scalar state value. The agent is trained online
//! from fixed-length rollouts using generalized advantage estimation.

mod codec;
mod gae;
mod network;
mod normalizer;
mod train;

pub use codec::{load, save, FORMAT_VERSION};
pub use gae::{compute_gae, compute_returns, AdvantageEstimate, Rollout, Step};
pub use network::{softmax2, ForwardOutput, ParamLayout, PolicyState};
pub use normalizer::RunningNormalizer;
pub use train::{clip_global_norm, loss_and_gradient, train_step, LossParts, TrainMetrics, TrainSample};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::Observation;

#[derive(Debug, Error)]
pub enum A2cError {
    #[error("policy state is corrupted: non-finite {0}")]
    Corrupted(&'static str),
    #[error("non-finite loss in training step; parameters left unchanged")]
    NonFiniteLoss,
    #[error("rollout is empty")]
    EmptyRollout,
    #[error("value estimates have length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid hyperparameters: {0}")]
    Hyperparameters(String),
    #[error("policy blob: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Send,
    Silent,
}

impl Action {
    /// Position in the policy head's output.
    pub fn index(self) -> usize {
        match self {
            Action::Send => 0,
            Action::Silent => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Action::Send
        } else {
            Action::Silent
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparameters {
    pub discount: f64,
    pub gae_lambda: f64,
    pub learning_rate: f64,
    pub sgd_iterations: usize,
    pub minibatch_size: usize,
    /// Playing steps collected before each training call.
    pub rollout_length: usize,
    pub consecutive_training_steps: usize,
    /// Global L2 norm bound on the gradient.
    pub gradient_clip: f64,
    pub normalize_observation: bool,
    pub heatup_steps: usize,
    pub hidden_units: usize,
    pub entropy_coef: f64,
    pub value_loss_coef: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            discount: 0.99,
            gae_lambda: 0.95,
            learning_rate: 1e-4,
            sgd_iterations: 5,
            minibatch_size: 64,
            rollout_length: 512,
            consecutive_training_steps: 1,
            gradient_clip: 40.0,
            normalize_observation: true,
            heatup_steps: 0,
            hidden_units: 256,
            entropy_coef: 0.01,
            value_loss_coef: 0.5,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<(), A2cError> {
        let bad = |m: &str| Err(A2cError::Hyperparameters(m.to_string()));
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return bad("discount must be in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must be in [0, 1]");
        }
        if self.sgd_iterations == 0
            || self.minibatch_size == 0
            || self.rollout_length == 0
            || self.consecutive_training_steps == 0
            || self.hidden_units == 0
        {
            return bad("counts must be positive");
        }
        if !(self.gradient_clip > 0.0) {
            return bad("gradient_clip must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        Ok(())
    }
}

/// Evaluates the policy; returns `[P(Send), P(Silent)]` and the state value.
pub fn forward(state: &PolicyState, obs: &Observation) -> Result<([f64; 2], f64), A2cError> {
    state.check_finite()?;
    let out = state.forward_raw(&state.normalize(obs));
    Ok((out.probs, out.value))
}

/// Samples an action from the policy; the confidence is `P(Send)`.
pub fn act(state: &PolicyState, obs: &Observation, rng: &mut impl Rng) -> Result<(Action, f64), A2cError> {
    let (probs, _) = forward(state, obs)?;
    Ok((sample_action(probs, rng), probs[0]))
}

pub fn sample_action(probs: [f64; 2], rng: &mut impl Rng) -> Action {
    let u: f64 = rng.gen();
    if u < probs[0] {
        Action::Send
    } else {
        Action::Silent
    }
}

/// A policy state paired with the hyperparameters that drive its training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct A2cAgent {
    pub state: PolicyState,
    pub hp: Hyperparameters,
}

impl A2cAgent {
    pub fn new(hp: Hyperparameters, rng: &mut impl Rng) -> Result<Self, A2cError> {
        hp.validate()?;
        Ok(A2cAgent {
            state: PolicyState::new(hp.hidden_units, rng),
            hp,
        })
    }

    pub fn act(&self, obs: &Observation, rng: &mut impl Rng) -> Result<(Action, f64), A2cError> {
        act(&self.state, obs, rng)
    }

    pub fn train(&mut self, rollout: &Rollout, rng: &mut impl Rng) -> Result<TrainMetrics, A2cError> {
        train_step(&mut self.state, rollout, &self.hp, rng)
    }
}
