use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use nudge_core::engine::{EngineConfig, Policy, UserEngine};
use nudge_core::a2c::Hyperparameters;
use nudge_core::microtask::MicrotaskPool;
use nudge_core::simulator::{Archetype, SimProfile, UserSimulator};
use nudge_core::study::{run_study, AgentKind, Preset, StudyConfig, UserSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tick(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pool = MicrotaskPool::default_pool(&mut rng, 20);
    let mut sim = UserSimulator::new(SimProfile::archetype(Archetype::MultiFactor), 2).unwrap();
    let contexts: Vec<_> = (600..1320).map(|m| sim.context(m)).collect();
    let policy = Policy::a2c(Hyperparameters::default(), 3).unwrap();
    let engine = UserEngine::new("bench", EngineConfig::default(), 4).unwrap();

    // One active day of decisions; no rollout completes, so this is inference cost.
    c.bench_function("engine_day_720_ticks_a2c", |b| {
        b.iter_batched(
            || (engine.clone(), policy.clone(), Vec::with_capacity(1024)),
            |(mut e, mut p, mut log)| {
                for (i, ctx) in contexts.iter().enumerate() {
                    e.tick(*ctx, 600 + i as u64, &mut p, &pool, &mut log).unwrap();
                }
                black_box(log.len())
            },
            BatchSize::LargeInput,
        )
    });
}

fn study(c: &mut Criterion) {
    let users = vec![
        UserSpec::new("rl", AgentKind::Rl, Preset::MultiFactor),
        UserSpec::new("sl", AgentKind::Sl, Preset::ScreenGated),
    ];
    let config = StudyConfig::new(users, 1, 5);
    let mut g = c.benchmark_group("study");
    g.sample_size(10);
    g.bench_function("study_2_users_1_week", |b| b.iter(|| run_study(black_box(&config)).unwrap()));
    g.finish();
}

criterion_group!(benches, tick, study);
criterion_main!(benches);
