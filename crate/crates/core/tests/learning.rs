//! End-to-end learning on problems whose answer is known.

use nudge_core::a2c::{forward, A2cAgent, Action, Hyperparameters, Rollout, Step};
use nudge_core::features::{encode, Location, Motion, Ringer, Screen, UserContext};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn context(screen: Screen) -> UserContext {
    UserContext::new(720, 2, Location::Home, Motion::Stationary, Ringer::Normal, screen, 30.0).unwrap()
}

/// Sending pays +1 in one context and -1 in the other; silence pays 0.
#[test]
fn two_context_bandit_is_learned() {
    let hp = Hyperparameters {
        learning_rate: 1e-3,
        ..Hyperparameters::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let mut agent = A2cAgent::new(hp.clone(), &mut rng).unwrap();
    let good = encode(&context(Screen::On));
    let bad = encode(&context(Screen::Off));
    let p_send = |agent: &A2cAgent, o| forward(&agent.state, o).unwrap().0[Action::Send.index()];

    for _ in 0..30 {
        let steps = (0..hp.rollout_length)
            .map(|_| {
                let on = rng.gen_bool(0.5);
                let obs = if on { good } else { bad };
                let (action, _) = agent.act(&obs, &mut rng).unwrap();
                let reward = match (action, on) {
                    (Action::Silent, _) => 0.0,
                    (Action::Send, true) => 1.0,
                    (Action::Send, false) => -1.0,
                };
                Step { obs, action, reward, done: true }
            })
            .collect();
        let rollout = Rollout { steps, bootstrap_obs: good };
        agent.train(&rollout, &mut rng).unwrap();
    }
    let (on, off) = (p_send(&agent, &good), p_send(&agent, &bad));
    assert!(on > 0.9 && off < 0.1, "P(send) on={on:.3} off={off:.3}");
}

/// With a constant reward and no discounting across episodes, the critic
/// converges on that reward.
#[test]
fn critic_tracks_a_constant_reward() {
    let hp = Hyperparameters {
        learning_rate: 1e-3,
        hidden_units: 32,
        ..Hyperparameters::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut agent = A2cAgent::new(hp.clone(), &mut rng).unwrap();
    let obs = encode(&context(Screen::On));
    for _ in 0..40 {
        let steps = (0..hp.rollout_length)
            .map(|_| Step { obs, action: Action::Silent, reward: 0.5, done: true })
            .collect();
        agent.train(&Rollout { steps, bootstrap_obs: obs }, &mut rng).unwrap();
    }
    let v = forward(&agent.state, &obs).unwrap().1;
    assert!((v - 0.5).abs() < 0.05, "V = {v}");
}
