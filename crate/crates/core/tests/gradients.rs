use nudge_core::a2c::{
    clip_global_norm, compute_gae, compute_returns, loss_and_gradient, softmax2, Action, PolicyState, Rollout, Step,
    TrainSample,
};
use nudge_core::features::{Observation, OBS_DIM};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_batch(rng: &mut impl Rng, n: usize) -> Vec<TrainSample> {
    (0..n)
        .map(|_| {
            let mut input = [0.0; OBS_DIM];
            for x in &mut input {
                *x = rng.gen_range(-2.0..2.0);
            }
            TrainSample {
                input,
                action: if rng.gen_bool(0.5) { Action::Send } else { Action::Silent },
                advantage: rng.gen_range(-2.0..2.0),
                return_target: rng.gen_range(-3.0..3.0),
            }
        })
        .collect()
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let mut state = PolicyState::new(rng.gen_range(2..=8), &mut rng);
        for p in state.params_mut() {
            *p = rng.gen_range(-1.0..1.0);
        }
        let n = rng.gen_range(1..=6);
        let batch = random_batch(&mut rng, n);
        let (value_coef, entropy_coef) = (rng.gen_range(0.1..1.0), rng.gen_range(0.0..0.1));
        let (_, grad) = loss_and_gradient(&state, &batch, value_coef, entropy_coef);
        for i in 0..grad.len() {
            let orig = state.params()[i];
            let eps = 1e-5;
            state.params_mut()[i] = orig + eps;
            let up = loss_and_gradient(&state, &batch, value_coef, entropy_coef).0.total;
            state.params_mut()[i] = orig - eps;
            let down = loss_and_gradient(&state, &batch, value_coef, entropy_coef).0.total;
            state.params_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            worst = worst.max((grad[i] - numeric).abs() / (grad[i].abs() + numeric.abs()).max(1e-5));
        }
    }
    assert!(worst < 1e-4, "max relative error {worst:e}");
}

fn rollout(rewards: &[f64], dones: &[bool]) -> Rollout {
    Rollout {
        steps: rewards
            .iter()
            .zip(dones)
            .map(|(&reward, &done)| Step {
                obs: Observation::default(),
                action: Action::Silent,
                reward,
                done,
            })
            .collect(),
        bootstrap_obs: Observation::default(),
    }
}

proptest! {
    #[test]
    fn lambda_one_gae_is_monte_carlo(
        rewards in prop::collection::vec(-5.0f64..1.0, 1..=8),
        values in prop::collection::vec(-3.0f64..3.0, 9),
        gamma in 0.5f64..0.999,
    ) {
        let n = rewards.len();
        let values = &values[..=n];
        let r = rollout(&rewards, &vec![false; n]);
        let gae = compute_gae(&r, values, gamma, 1.0).unwrap();
        let returns = compute_returns(&rewards, gamma, values[n]);
        for t in 0..n {
            prop_assert!((gae[t].advantage - (returns[t] - values[t])).abs() < 1e-10);
            prop_assert!((gae[t].return_target - returns[t]).abs() < 1e-10);
        }
    }

    #[test]
    fn lambda_zero_gae_is_one_step_td(
        rewards in prop::collection::vec(-5.0f64..1.0, 1..=8),
        dones in prop::collection::vec(any::<bool>(), 8),
        values in prop::collection::vec(-3.0f64..3.0, 9),
        gamma in 0.5f64..0.999,
    ) {
        let n = rewards.len();
        let r = rollout(&rewards, &dones[..n]);
        let gae = compute_gae(&r, &values[..=n], gamma, 0.0).unwrap();
        for t in 0..n {
            let live = if dones[t] { 0.0 } else { 1.0 };
            let td = rewards[t] + gamma * live * values[t + 1] - values[t];
            prop_assert!((gae[t].advantage - td).abs() < 1e-10);
        }
    }

    #[test]
    fn softmax_is_a_distribution(a in -50.0f64..50.0, b in -50.0f64..50.0) {
        let p = softmax2([a, b]);
        prop_assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|x| (0.0..=1.0).contains(x)));
        prop_assert_eq!(a > b, p[0] > p[1]);
    }

    #[test]
    fn clipping_bounds_the_norm(g in prop::collection::vec(-100.0f64..100.0, 1..50), max in 0.1f64..50.0) {
        let mut v = g.clone();
        let before = clip_global_norm(&mut v, max);
        let after = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((before - g.iter().map(|x| x * x).sum::<f64>().sqrt()).abs() < 1e-9);
        prop_assert!(after <= max + 1e-9);
        if before <= max {
            prop_assert_eq!(v, g);
        }
    }
}
