mod common;

use std::fs::OpenOptions;
use std::io::Write;

use common::{small_settings, window_minutes, SimClient};
use nudge_core::engine::EventKind;
use nudge_core::simulator::{Archetype, SimProfile};
use nudge_core::study::{simulate_user, AgentKind, StudyConfig, UserSpec};
use nudge_core::study::Preset;
use nudge_service::{DecisionResponse, RegisterRequest, Service};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn register(svc: &Service, user: &str, agent: AgentKind) {
    svc.register_user(&RegisterRequest {
        user_id: user.into(),
        agent_kind: agent,
        config: small_settings(0),
    })
    .unwrap();
}

/// Drives one user for `days`, calling `between` before every request.
fn drive(
    svc: &mut Service,
    user: &str,
    profile: SimProfile,
    days: u64,
    mut between: impl FnMut(usize, &mut Service),
) -> Vec<DecisionResponse> {
    let mut client = SimClient::new(user, profile, 0);
    let mut out = Vec::new();
    for (i, minute) in window_minutes(days).enumerate() {
        between(i, svc);
        let req = client.request(minute);
        let resp = svc.handle_request(&req).unwrap();
        client.observe(&req, &resp);
        out.push(resp);
    }
    out
}

#[test]
fn restarts_do_not_change_the_decision_stream() {
    let profile = SimProfile::archetype(Archetype::MultiFactor);
    let days = 2;

    let a = tempfile::tempdir().unwrap();
    let mut svc = Service::open(a.path()).unwrap();
    register(&svc, "u1", AgentKind::Rl);
    let reference = drive(&mut svc, "u1", profile.clone(), days, |_, _| {});
    let reference_state = svc.load_user("u1").unwrap();
    assert!(reference_state.engine.counters().train_steps > 0);

    let b = tempfile::tempdir().unwrap();
    let mut svc = Service::open(b.path()).unwrap();
    register(&svc, "u1", AgentKind::Rl);
    let n = (days * 720) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let kills: Vec<usize> = sample(&mut rng, n - 1, 200).into_iter().map(|i| i + 1).collect();
    let root = b.path().to_path_buf();
    let restarted = drive(&mut svc, "u1", profile, days, |i, svc| {
        if let Some(k) = kills.iter().position(|&k| k == i) {
            // Every other kill also leaves a torn, uncommitted log line.
            if k % 2 == 0 {
                let mut f = OpenOptions::new()
                    .append(true)
                    .open(root.join("users/u1/events.jsonl"))
                    .unwrap();
                f.write_all(b"{\"user\":\"u1\",\"minute\":").unwrap();
            }
            *svc = Service::open(&root).unwrap();
        }
    });

    assert_eq!(restarted, reference);
    assert_eq!(svc.load_user("u1").unwrap(), reference_state);
    let log_a = std::fs::read(a.path().join("users/u1/events.jsonl")).unwrap();
    let log_b = std::fs::read(b.path().join("users/u1/events.jsonl")).unwrap();
    assert!(log_a == log_b, "event logs differ");
}

#[test]
fn twin_front_ends_over_one_store_agree_with_a_single_one() {
    let profile = SimProfile::archetype(Archetype::ScreenGated);

    let a = tempfile::tempdir().unwrap();
    let mut single = Service::open(a.path()).unwrap();
    register(&single, "u1", AgentKind::Sl);
    let reference = drive(&mut single, "u1", profile.clone(), 1, |_, _| {});

    let b = tempfile::tempdir().unwrap();
    let front = [Service::open(b.path()).unwrap(), Service::open(b.path()).unwrap()];
    register(&front[1], "u1", AgentKind::Sl);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut current = front[0].clone();
    let twin = drive(&mut current, "u1", profile, 1, |_, svc| {
        *svc = front[rand::Rng::gen_range(&mut rng, 0..2)].clone();
    });
    assert_eq!(twin, reference);
}

#[test]
fn service_reproduces_the_batch_harness() {
    let days = 2;
    let mut config = StudyConfig::new(vec![UserSpec::new("u1", AgentKind::Rl, Preset::MultiFactor)], 1, 0);
    config.hyperparameters = small_settings(0).hyperparameters;
    let pool = config.build_pool().unwrap();
    let batch = simulate_user(&config.users[0], &config, &pool, days).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let mut svc = Service::open(dir.path()).unwrap();
    assert_eq!(svc.pool(), &pool);
    register(&svc, "u1", AgentKind::Rl);
    drive(&mut svc, "u1", Preset::MultiFactor.profile(), days, |_, _| {});
    let served = svc.store().events("u1").unwrap();

    let decisions = |events: &[nudge_core::engine::EventRecord]| {
        events
            .iter()
            .filter(|e| e.event == EventKind::Decision)
            .map(|e| (e.minute, e.action, e.confidence.map(f64::to_bits), e.notification_id))
            .collect::<Vec<_>>()
    };
    let rewards = |events: &[nudge_core::engine::EventRecord]| {
        events
            .iter()
            .filter(|e| e.event == EventKind::Resolution && e.sent_at.unwrap() < days * 1440 - 120)
            .map(|e| (e.notification_id, e.reward.map(f64::to_bits)))
            .collect::<Vec<_>>()
    };
    assert_eq!(decisions(&served), decisions(&batch.events));
    assert_eq!(rewards(&served), rewards(&batch.events));
    assert!(served.iter().all(|e| e.event != EventKind::Fault));
}
