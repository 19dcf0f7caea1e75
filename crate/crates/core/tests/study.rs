use std::collections::HashMap;
use std::fs;

use nudge_core::engine::{EventKind, PolicySource};
use nudge_core::study::{
    group_summary, read_events, report, run_study, weekly_metrics, write_run, AgentKind, Phase, Preset, StudyConfig,
    UserSpec, WeeklyMetrics,
};

fn cheap_config(weeks: u64) -> StudyConfig {
    let presets = [Preset::HighResponder, Preset::LowResponder, Preset::ScreenGated, Preset::MultiFactor, Preset::WeekendBoosted];
    let mut users = Vec::new();
    for (i, p) in presets.iter().enumerate() {
        users.push(UserSpec::new(format!("sl{i}"), AgentKind::Sl, *p));
        users.push(UserSpec::new(format!("rnd{i}"), AgentKind::Random, *p));
        users.push(UserSpec::new(format!("send{i}"), AgentKind::AlwaysSend, *p));
    }
    let mut c = StudyConfig::new(users, weeks, 17);
    c.supervised.training_weeks = 1;
    c
}

#[test]
fn report_rows_and_invariants() {
    let config = cheap_config(5);
    let result = run_study(&config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let summary = write_run(&result, &config, dir.path()).unwrap();
    assert_eq!(summary.users, 15);

    let mut reader = csv::Reader::from_path(dir.path().join("metrics.csv")).unwrap();
    let rows: Vec<WeeklyMetrics> = reader.deserialize().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 75);
    for r in &rows {
        assert_eq!(r.answered + r.dismissed + r.ignored, r.sent, "{r:?}");
        assert!(r.answered <= r.sent && r.dismissed <= r.sent);
        let expect = |n: u64| if r.sent == 0 { 0.0 } else { n as f64 / r.sent as f64 };
        assert_eq!(r.answer_rate, expect(r.answered));
        assert_eq!(r.dismiss_rate, expect(r.dismissed));
    }

    // Weekly reward, recomputed independently from the written logs.
    for spec in &config.users {
        let events = read_events(&dir.path().join("events").join(format!("{}.jsonl", spec.id))).unwrap();
        let mut by_week: HashMap<u64, f64> = HashMap::new();
        for e in events.iter().filter(|e| e.event == EventKind::Resolution) {
            *by_week.entry(e.sent_at.unwrap() / (7 * 1440) + 1).or_default() += e.reward.unwrap();
        }
        for r in rows.iter().filter(|r| r.user == spec.id) {
            let expected = by_week.get(&r.week).copied().unwrap_or(0.0);
            assert!((r.reward - expected).abs() < 1e-9, "{} week {}", r.user, r.week);
        }
    }

    // Group means are plain means of member rows.
    let groups = group_summary(&rows);
    for g in &groups {
        let members: Vec<_> = rows.iter().filter(|r| r.phase == g.phase).collect();
        assert_eq!(g.rows, members.len());
        let mean = members.iter().map(|r| r.reward).sum::<f64>() / members.len() as f64;
        assert!((g.reward - mean).abs() < 1e-9);
    }
    assert!(groups.iter().any(|g| g.phase == Phase::SlTrain));
    assert!(groups.iter().any(|g| g.phase == Phase::SlTest));

    // Recomputing the report from disk gives the same summary, written atomically.
    let again = report(dir.path()).unwrap();
    assert_eq!(again, summary);
    assert!(fs::read_dir(dir.path()).unwrap().all(|e| !e.unwrap().file_name().to_string_lossy().starts_with(".tmp")));
    let trace = fs::read_to_string(dir.path().join("traces/sl0.csv")).unwrap();
    let consulted = result.users[0].events.iter().filter(|e| e.is_consulted_decision()).count();
    assert_eq!(trace.lines().count(), consulted + 1);
}

#[test]
fn supervised_phases_use_the_right_policy() {
    let config = cheap_config(2);
    let result = run_study(&config).unwrap();
    let boundary = 7 * 1440;
    for run in result.users.iter().filter(|r| r.spec.agent == AgentKind::Sl) {
        for e in run.events.iter().filter(|e| e.is_consulted_decision()) {
            let expected = if e.minute < boundary { PolicySource::Random } else { PolicySource::Forest };
            assert_eq!(e.source, Some(expected), "{} at {}", run.spec.id, e.minute);
        }
        assert_eq!(run.events.iter().filter(|e| e.event == EventKind::PhaseChange).count(), 1);
    }
}

#[test]
fn same_seed_same_study() {
    let config = cheap_config(1);
    let a = run_study(&config).unwrap();
    let b = run_study(&config).unwrap();
    assert_eq!(a, b);
    let mut other = config.clone();
    other.seed += 1;
    let c = run_study(&other).unwrap();
    assert_ne!(a.users[0].events, c.users[0].events);
    let rows = weekly_metrics("send0", AgentKind::AlwaysSend, &a.users[2].events, 1, 1);
    assert_eq!(rows[0].sent, 7 * 150);
}
