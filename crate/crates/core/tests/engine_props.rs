use std::collections::HashMap;

use nudge_core::a2c::{Action, Hyperparameters};
use nudge_core::engine::{EngineConfig, EngineError, EventKind, EventRecord, Policy, UserEngine};
use nudge_core::features::{Location, Motion, Ringer, Screen, UserContext};
use nudge_core::forest::RandomSchedule;
use nudge_core::microtask::MicrotaskPool;
use nudge_core::reward::Outcome;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const DAY: u64 = 1440;

#[derive(Debug, Clone)]
enum Op {
    Tick { gap: u64, screen_on: bool },
    Respond { kind: u8, wrong_id: bool, t: f64 },
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        8 => (prop_oneof![9 => Just(1u64), 1 => 2u64..3000], any::<bool>())
            .prop_map(|(gap, screen_on)| Op::Tick { gap, screen_on }),
        2 => (0u8..3, prop::bool::weighted(0.1), 0.0f64..60.0)
            .prop_map(|(kind, wrong_id, t)| Op::Respond { kind, wrong_id, t }),
    ]
}

fn policy(kind: u8, seed: u64) -> Policy {
    let schedule = RandomSchedule {
        tau_minutes: 1,
        send_probability: 0.6,
        window_start: 600,
        window_end: 1320,
    };
    match kind {
        0 => Policy::Fixed { action: Action::Send },
        1 => Policy::Random { schedule },
        _ => Policy::a2c(
            Hyperparameters {
                hidden_units: 4,
                rollout_length: 16,
                minibatch_size: 4,
                ..Hyperparameters::default()
            },
            seed,
        )
        .unwrap(),
    }
}

fn ctx(minute: u64, screen_on: bool) -> UserContext {
    UserContext::new(
        (minute % DAY) as u32,
        ((minute / DAY) % 7) as u8,
        Location::Home,
        Motion::Stationary,
        Ringer::Normal,
        if screen_on { Screen::On } else { Screen::Off },
        0.0,
    )
    .unwrap()
}

/// Checks the guards over a complete log.
fn check_log(log: &[EventRecord], config: &EngineConfig) -> Result<(), TestCaseError> {
    let mut per_day: HashMap<u64, u32> = HashMap::new();
    let mut resolved: HashMap<u64, u32> = HashMap::new();
    let mut sent = Vec::new();
    let mut outstanding = 0;
    for e in log {
        match e.event {
            EventKind::Decision if e.action == Some(Action::Send) => {
                prop_assert!(config.in_window(e.minute), "send at {}", e.minute);
                let n = per_day.entry(e.minute / DAY).or_default();
                *n += 1;
                prop_assert!(*n <= config.daily_cap);
                prop_assert_eq!(outstanding, 0, "send while another is pending");
                outstanding += 1;
                sent.push(e.notification_id.unwrap());
            }
            EventKind::Resolution => {
                *resolved.entry(e.notification_id.unwrap()).or_default() += 1;
                outstanding -= 1;
            }
            _ => {}
        }
    }
    prop_assert_eq!(resolved.len(), sent.len());
    for id in sent {
        prop_assert_eq!(resolved.get(&id), Some(&1));
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn guards_hold_under_random_traffic(
        ops in prop::collection::vec(op(), 1..2000),
        kind in 0u8..3,
        cap in 1u32..20,
        seed in any::<u64>(),
    ) {
        let config = EngineConfig { daily_cap: cap, ..EngineConfig::default() };
        let pool = MicrotaskPool::default_pool(&mut ChaCha8Rng::seed_from_u64(seed), 2);
        let mut policy = policy(kind, seed);
        let mut engine = UserEngine::new("p", config.clone(), seed).unwrap();
        let mut log = Vec::new();
        let mut minute = 600;
        for op in ops {
            match op {
                Op::Tick { gap, screen_on } => {
                    minute += gap;
                    let out = engine.tick(ctx(minute, screen_on), minute, &mut policy, &pool, &mut log).unwrap();
                    prop_assert_eq!(out.microtask.is_some(), out.action == Action::Send);
                    if let Some(c) = out.confidence {
                        prop_assert!((0.0..=1.0).contains(&c));
                    }
                }
                Op::Respond { kind, wrong_id, t } => {
                    let before = engine.clone();
                    let pending = engine.pending().map(|p| p.id);
                    let outcome = match kind {
                        0 => Outcome::answered(t),
                        1 => Outcome::Dismissed,
                        _ => Outcome::Ignored,
                    };
                    let id = pending.map(|p| if wrong_id { p + 7 } else { p });
                    let r = engine.resolve(id, outcome, minute, &mut policy, &pool, &mut log);
                    match (pending, wrong_id) {
                        (None, _) => prop_assert!(matches!(r, Err(EngineError::NoPending)), "expected NoPending"),
                        (Some(_), true) => {
                            prop_assert!(matches!(r, Err(EngineError::WrongNotification { .. })), "expected WrongNotification");
                            prop_assert_eq!(&engine, &before);
                        }
                        (Some(_), false) => prop_assert!(r.is_ok() && engine.pending().is_none()),
                    }
                }
            }
        }
        // Going back in time is refused without touching state.
        let before = engine.clone();
        prop_assert!(engine.tick(ctx(minute, true), minute, &mut policy, &pool, &mut log).is_err());
        prop_assert_eq!(&engine, &before);

        engine.expire(minute + 2 * DAY, &mut policy, &mut log);
        prop_assert!(engine.pending().is_none());
        check_log(&log, &config)?;
    }
}
