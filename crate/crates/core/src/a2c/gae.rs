use serde::{Deserialize, Serialize};

use super::{A2cError, Action};
use crate::features::Observation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub obs: Observation,
    pub action: Action,
    pub reward: f64,
    pub done: bool,
}

/// Consecutive steps plus the observation that follows the last one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub steps: Vec<Step>,
    pub bootstrap_obs: Observation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdvantageEstimate {
    pub advantage: f64,
    /// Critic target: `advantage + V(o_t)`.
    pub return_target: f64,
}

/// Discounted returns `R_t = r_t + discount * R_{t+1}`, seeded with `bootstrap`.
pub fn compute_returns(rewards: &[f64], discount: f64, bootstrap: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = bootstrap;
    for (o, r) in out.iter_mut().zip(rewards).rev() {
        acc = r + discount * acc;
        *o = acc;
    }
    out
}

/// Generalized advantage estimates. `values` holds `V(o_t)` for every step
/// followed by the bootstrap value.
pub fn compute_gae(
    rollout: &Rollout,
    values: &[f64],
    discount: f64,
    lambda: f64,
) -> Result<Vec<AdvantageEstimate>, A2cError> {
    let n = rollout.steps.len();
    if values.len() != n + 1 {
        return Err(A2cError::LengthMismatch {
            expected: n + 1,
            got: values.len(),
        });
    }
    let mut out = vec![
        AdvantageEstimate {
            advantage: 0.0,
            return_target: 0.0
        };
        n
    ];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let step = &rollout.steps[t];
        let live = if step.done { 0.0 } else { 1.0 };
        let delta = step.reward + discount * values[t + 1] * live - values[t];
        let adv = delta + discount * lambda * live * next_adv;
        out[t] = AdvantageEstimate {
            advantage: adv,
            return_target: adv + values[t],
        };
        next_adv = adv;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rollout(rewards: &[f64], dones: &[bool]) -> Rollout {
        Rollout {
            steps: rewards
                .iter()
                .zip(dones)
                .map(|(&reward, &done)| Step {
                    obs: Observation::default(),
                    action: Action::Send,
                    reward,
                    done,
                })
                .collect(),
            bootstrap_obs: Observation::default(),
        }
    }

    #[test]
    fn returns_examples() {
        assert_eq!(compute_returns(&[1.0, 1.0], 0.99, 0.0), vec![1.99, 1.0]);
        assert_eq!(compute_returns(&[5.0], 0.3, 0.0), vec![5.0]);
        // Forward sums: R_0 = 0 + 0.5*0 + 0.25*1, R_1 = 0.5*1, R_2 = 1.
        assert_eq!(compute_returns(&[0.0, 0.0, 1.0], 0.5, 0.0), vec![0.25, 0.5, 1.0]);
        assert_eq!(compute_returns(&[2.0, -1.0, 3.0], 0.0, 7.0), vec![2.0, -1.0, 3.0]);
    }

    #[test]
    fn gae_examples() {
        let single = rollout(&[1.0], &[true]);
        let a = compute_gae(&single, &[0.0, 123.0], 0.99, 0.95).unwrap();
        assert_eq!(a[0].advantage, 1.0);

        // delta_1 = 1 - 0.2 = 0.8; delta_0 = 0 + 0.99*0.2 - 0.5 = -0.302;
        // A_0 = -0.302 + 0.99*0.95*0.8 = -151/500 + 0.7524 = 0.4504 (exact rational arithmetic).
        let r = rollout(&[0.0, 1.0], &[false, true]);
        let a = compute_gae(&r, &[0.5, 0.2, 0.0], 0.99, 0.95).unwrap();
        assert!((a[1].advantage - 0.8).abs() < 1e-12);
        assert!((a[0].advantage - 0.4504).abs() < 1e-12);
        assert!((a[0].return_target - 0.9504).abs() < 1e-12);

        let lambda0 = compute_gae(&r, &[0.5, 0.2, 0.0], 0.99, 0.0).unwrap();
        assert!((lambda0[0].advantage - (-0.302)).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let r = rollout(&[0.0, 1.0], &[false, false]);
        assert!(matches!(
            compute_gae(&r, &[0.0, 0.0], 0.9, 0.9),
            Err(A2cError::LengthMismatch { expected: 3, got: 2 })
        ));
    }
}
