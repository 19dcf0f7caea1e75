use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gae::{compute_gae, Rollout};
use super::network::PolicyState;
use super::{A2cError, Action, Hyperparameters};
use crate::features::OBS_DIM;

/// One training example with its advantage and critic target frozen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSample {
    /// Already-normalized input.
    pub input: [f64; OBS_DIM],
    pub action: Action,
    pub advantage: f64,
    pub return_target: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    /// `policy + value_coef * value - entropy_coef * entropy`
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Mean pre-clip global gradient norm over the minibatch updates.
    pub grad_norm: f64,
    pub updates: usize,
}

/// Minibatch loss and its exact gradient with respect to every parameter.
pub fn loss_and_gradient(
    state: &PolicyState,
    batch: &[TrainSample],
    value_coef: f64,
    entropy_coef: f64,
) -> (LossParts, Vec<f64>) {
    let l = state.layout();
    let hidden = state.hidden;
    let p = &state.params;
    let mut grad = vec![0.0; p.len()];
    let mut parts = LossParts::default();
    let scale = 1.0 / batch.len() as f64;

    for s in batch {
        let out = state.forward_raw(&s.input);
        let m = out.logits[0].max(out.logits[1]);
        let lse = m + ((out.logits[0] - m).exp() + (out.logits[1] - m).exp()).ln();
        let log_p = [out.logits[0] - lse, out.logits[1] - lse];
        let entropy = -(out.probs[0] * log_p[0] + out.probs[1] * log_p[1]);
        let a = s.action.index();
        let diff = out.value - s.return_target;

        parts.policy -= scale * log_p[a] * s.advantage;
        parts.value += scale * diff * diff;
        parts.entropy += scale * entropy;

        let mut d_logits = [0.0; 2];
        for (k, d) in d_logits.iter_mut().enumerate() {
            let indicator = if k == a { 1.0 } else { 0.0 };
            *d = scale * (-s.advantage * (indicator - out.probs[k])
                + entropy_coef * out.probs[k] * (log_p[k] + entropy));
        }
        let d_value = scale * value_coef * 2.0 * diff;

        for k in 0..2 {
            grad[l.bp() + k] += d_logits[k];
            let row = l.wp() + k * hidden;
            for j in 0..hidden {
                grad[row + j] += d_logits[k] * out.hidden[j];
            }
        }
        grad[l.bv()] += d_value;
        for j in 0..hidden {
            grad[l.wv() + j] += d_value * out.hidden[j];
        }
        for j in 0..hidden {
            if out.pre_activation[j] <= 0.0 {
                continue;
            }
            let dh = d_logits[0] * p[l.wp() + j]
                + d_logits[1] * p[l.wp() + hidden + j]
                + d_value * p[l.wv() + j];
            grad[l.b1() + j] += dh;
            let row = l.w1() + j * OBS_DIM;
            for i in 0..OBS_DIM {
                grad[row + i] += dh * s.input[i];
            }
        }
    }
    parts.total = parts.policy + value_coef * parts.value - entropy_coef * parts.entropy;
    (parts, grad)
}

/// Rescales `grad` in place so its L2 norm is at most `max_norm`; returns the original norm.
pub fn clip_global_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grad.iter_mut() {
            *g *= s;
        }
    }
    norm
}

fn adam_step(state: &mut PolicyState, grad: &[f64], hp: &Hyperparameters) {
    state.adam_t += 1;
    let t = state.adam_t as f64;
    let bc1 = 1.0 - hp.adam_beta1.powf(t);
    let bc2 = 1.0 - hp.adam_beta2.powf(t);
    for i in 0..grad.len() {
        let g = grad[i];
        state.adam_m[i] = hp.adam_beta1 * state.adam_m[i] + (1.0 - hp.adam_beta1) * g;
        state.adam_v[i] = hp.adam_beta2 * state.adam_v[i] + (1.0 - hp.adam_beta2) * g * g;
        let m_hat = state.adam_m[i] / bc1;
        let v_hat = state.adam_v[i] / bc2;
        state.params[i] -= hp.learning_rate * m_hat / (v_hat.sqrt() + hp.adam_epsilon);
    }
}

/// One actor-critic update from a completed rollout.
///
/// Observation statistics absorb the rollout first; advantages are computed
/// once and then held fixed across `sgd_iterations` passes of shuffled
/// minibatches. On a non-finite loss the state is left exactly as it was.
pub fn train_step(
    state: &mut PolicyState,
    rollout: &Rollout,
    hp: &Hyperparameters,
    rng: &mut impl Rng,
) -> Result<TrainMetrics, A2cError> {
    if rollout.steps.is_empty() {
        return Err(A2cError::EmptyRollout);
    }
    state.check_finite()?;
    let mut work = state.clone();
    if hp.normalize_observation {
        let obs: Vec<_> = rollout.steps.iter().map(|s| s.obs).collect();
        work.normalizer.update(&obs);
    }

    let inputs: Vec<[f64; OBS_DIM]> = rollout.steps.iter().map(|s| work.normalize(&s.obs)).collect();
    let mut values: Vec<f64> = inputs.iter().map(|x| work.forward_raw(x).value).collect();
    values.push(work.value(&rollout.bootstrap_obs));
    let estimates = compute_gae(rollout, &values, hp.discount, hp.gae_lambda)?;

    let samples: Vec<TrainSample> = rollout
        .steps
        .iter()
        .zip(&inputs)
        .zip(&estimates)
        .map(|((step, input), est)| TrainSample {
            input: *input,
            action: step.action,
            advantage: est.advantage,
            return_target: est.return_target,
        })
        .collect();

    let mut metrics = TrainMetrics::default();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut batch = Vec::with_capacity(hp.minibatch_size);
    for _ in 0..hp.sgd_iterations {
        order.shuffle(rng);
        for chunk in order.chunks(hp.minibatch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| samples[i]));
            let (loss, mut grad) = loss_and_gradient(&work, &batch, hp.value_loss_coef, hp.entropy_coef);
            if !loss.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(A2cError::NonFiniteLoss);
            }
            let norm = clip_global_norm(&mut grad, hp.gradient_clip);
            adam_step(&mut work, &grad, hp);
            metrics.policy_loss += loss.policy;
            metrics.value_loss += loss.value;
            metrics.entropy += loss.entropy;
            metrics.grad_norm += norm;
            metrics.updates += 1;
        }
    }
    if work.check_finite().is_err() {
        return Err(A2cError::NonFiniteLoss);
    }
    let n = metrics.updates as f64;
    metrics.policy_loss /= n;
    metrics.value_loss /= n;
    metrics.entropy /= n;
    metrics.grad_norm /= n;
    work.step += rollout.steps.len() as u64;
    *state = work;
    Ok(metrics)
}
