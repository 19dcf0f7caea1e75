use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AgentKind;
use crate::a2c::Action;
use crate::engine::{EventKind, EventRecord};
use crate::features::MINUTES_PER_DAY;
use crate::microtask::Verdict;
use crate::reward::Outcome;

const DAY: u64 = MINUTES_PER_DAY as u64;
const WEEK: u64 = 7 * DAY;

/// Reporting group a user-week belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Rl,
    SlTrain,
    SlTest,
    Random,
    AlwaysSilent,
    AlwaysSend,
}

impl Phase {
    pub fn of(agent: AgentKind, week: u64, training_weeks: u64) -> Phase {
        match agent {
            AgentKind::Rl => Phase::Rl,
            AgentKind::Sl if week < training_weeks => Phase::SlTrain,
            AgentKind::Sl => Phase::SlTest,
            AgentKind::Random => Phase::Random,
            AgentKind::AlwaysSilent => Phase::AlwaysSilent,
            AgentKind::AlwaysSend => Phase::AlwaysSend,
        }
    }
}

/// One row of `metrics.csv`. Outcomes and rewards are attributed to the week
/// the notification was sent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeeklyMetrics {
    pub user: String,
    pub phase: Phase,
    /// 1-based.
    pub week: u64,
    pub sent: u64,
    pub answered: u64,
    pub dismissed: u64,
    pub ignored: u64,
    pub answer_rate: f64,
    pub dismiss_rate: f64,
    pub reward: f64,
    pub factual_answers: u64,
    pub correct_answers: u64,
    /// Correct over factual answers; 0 when there were none.
    pub accuracy: f64,
    pub consulted: u64,
    pub mean_confidence: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn weekly_metrics(
    user: &str,
    agent: AgentKind,
    events: &[EventRecord],
    weeks: u64,
    training_weeks: u64,
) -> Vec<WeeklyMetrics> {
    let mut rows: Vec<WeeklyMetrics> = (0..weeks)
        .map(|w| WeeklyMetrics {
            user: user.to_string(),
            phase: Phase::of(agent, w, training_weeks),
            week: w + 1,
            sent: 0,
            answered: 0,
            dismissed: 0,
            ignored: 0,
            answer_rate: 0.0,
            dismiss_rate: 0.0,
            reward: 0.0,
            factual_answers: 0,
            correct_answers: 0,
            accuracy: 0.0,
            consulted: 0,
            mean_confidence: 0.0,
        })
        .collect();
    let mut confidence_sum = vec![0.0; rows.len()];
    let week_of = |minute: u64| (minute / WEEK) as usize;

    for e in events {
        match e.event {
            EventKind::Decision => {
                let Some(row) = rows.get_mut(week_of(e.minute)) else { continue };
                if e.action == Some(Action::Send) {
                    row.sent += 1;
                }
                if e.is_consulted_decision() {
                    row.consulted += 1;
                    confidence_sum[week_of(e.minute)] += e.confidence.unwrap_or(0.0);
                }
            }
            EventKind::Resolution => {
                let sent_at = e.sent_at.unwrap_or(e.minute);
                let Some(row) = rows.get_mut(week_of(sent_at)) else { continue };
                match e.outcome {
                    Some(Outcome::Answered { .. }) => row.answered += 1,
                    Some(Outcome::Dismissed) => row.dismissed += 1,
                    Some(Outcome::Ignored) => row.ignored += 1,
                    None => {}
                }
                row.reward += e.reward.unwrap_or(0.0);
                match e.verdict {
                    Some(Verdict::Correct) => {
                        row.factual_answers += 1;
                        row.correct_answers += 1;
                    }
                    Some(Verdict::Incorrect) => row.factual_answers += 1,
                    _ => {}
                }
            }
            _ => {}
        }
    }
    for (row, c) in rows.iter_mut().zip(confidence_sum) {
        row.answer_rate = ratio(row.answered, row.sent);
        row.dismiss_rate = ratio(row.dismissed, row.sent);
        row.accuracy = ratio(row.correct_answers, row.factual_answers);
        row.mean_confidence = if row.consulted == 0 { 0.0 } else { c / row.consulted as f64 };
    }
    rows
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidencePoint {
    pub minute: u64,
    pub confidence: f64,
}

/// P(Send) at every tick where a policy was consulted, in log order.
pub fn confidence_trace(events: &[EventRecord]) -> Vec<ConfidencePoint> {
    events
        .iter()
        .filter(|e| e.is_consulted_decision())
        .map(|e| ConfidencePoint {
            minute: e.minute,
            confidence: e.confidence.unwrap_or(0.0),
        })
        .collect()
}

/// Sum of credited rewards per day of sending, for every day with a decision.
pub fn daily_rewards(events: &[EventRecord]) -> Vec<(u64, f64)> {
    let mut days: BTreeMap<u64, f64> = BTreeMap::new();
    for e in events {
        match e.event {
            EventKind::Decision => {
                days.entry(e.minute / DAY).or_insert(0.0);
            }
            EventKind::Resolution => {
                *days.entry(e.sent_at.unwrap_or(e.minute) / DAY).or_insert(0.0) += e.reward.unwrap_or(0.0);
            }
            _ => {}
        }
    }
    days.into_iter().collect()
}

/// Arithmetic means over the rows of one phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub phase: Phase,
    pub rows: usize,
    pub sent: f64,
    pub answered: f64,
    pub dismissed: f64,
    pub ignored: f64,
    pub answer_rate: f64,
    pub dismiss_rate: f64,
    pub reward: f64,
    pub accuracy: f64,
    pub mean_confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub seed: u64,
    pub weeks: u64,
    pub users: usize,
    pub groups: Vec<GroupMetrics>,
}

pub fn group_summary(rows: &[WeeklyMetrics]) -> Vec<GroupMetrics> {
    let mut by_phase: BTreeMap<Phase, Vec<&WeeklyMetrics>> = BTreeMap::new();
    for r in rows {
        by_phase.entry(r.phase).or_default().push(r);
    }
    by_phase
        .into_iter()
        .map(|(phase, rs)| {
            let n = rs.len() as f64;
            let mean = |f: &dyn Fn(&WeeklyMetrics) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
            GroupMetrics {
                phase,
                rows: rs.len(),
                sent: mean(&|r| r.sent as f64),
                answered: mean(&|r| r.answered as f64),
                dismissed: mean(&|r| r.dismissed as f64),
                ignored: mean(&|r| r.ignored as f64),
                answer_rate: mean(&|r| r.answer_rate),
                dismiss_rate: mean(&|r| r.dismiss_rate),
                reward: mean(&|r| r.reward),
                accuracy: mean(&|r| r.accuracy),
                mean_confidence: mean(&|r| r.mean_confidence),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::PolicySource;

    fn decision(minute: u64, action: Action, confidence: f64) -> EventRecord {
        let mut e: EventRecord = serde_json::from_value(serde_json::json!({
            "user": "u", "minute": minute, "event": "decision"
        }))
        .unwrap();
        e.action = Some(action);
        e.confidence = Some(confidence);
        e.source = Some(PolicySource::A2c);
        e
    }

    fn resolution(minute: u64, sent_at: u64, outcome: Outcome, reward: f64) -> EventRecord {
        let mut e: EventRecord = serde_json::from_value(serde_json::json!({
            "user": "u", "minute": minute, "event": "resolution"
        }))
        .unwrap();
        e.outcome = Some(outcome);
        e.reward = Some(reward);
        e.sent_at = Some(sent_at);
        e
    }

    #[test]
    fn rates_are_counts_over_sent() {
        let mut events = Vec::new();
        for i in 0..100 {
            events.push(decision(600 + i, Action::Send, 0.7));
            let outcome = if i < 27 {
                Outcome::answered(0.0)
            } else if i < 30 {
                Outcome::Dismissed
            } else {
                Outcome::Ignored
            };
            events.push(resolution(601 + i, 600 + i, outcome, 0.0));
        }
        let rows = weekly_metrics("u", AgentKind::Rl, &events, 1, 3);
        let w = &rows[0];
        assert_eq!(w.sent, 100);
        assert_eq!(w.answer_rate, 0.27);
        assert_eq!(w.dismiss_rate, 0.03);
        assert_eq!(w.answered + w.dismissed + w.ignored, w.sent);
        assert!((w.mean_confidence - 0.7).abs() < 1e-12);
    }

    #[test]
    fn late_resolutions_count_in_the_send_week() {
        let sent = WEEK - 10;
        let events = vec![
            decision(sent, Action::Send, 1.0),
            resolution(WEEK + 600, sent, Outcome::Ignored, -0.1),
        ];
        let rows = weekly_metrics("u", AgentKind::Sl, &events, 2, 1);
        assert_eq!((rows[0].sent, rows[0].ignored), (1, 1));
        assert_eq!(rows[0].reward, -0.1);
        assert_eq!(rows[1].sent, 0);
        assert_eq!((rows[0].phase, rows[1].phase), (Phase::SlTrain, Phase::SlTest));
    }

    #[test]
    fn traces() {
        assert!(confidence_trace(&[]).is_empty());
        assert!(daily_rewards(&[]).is_empty());
        let events = vec![
            decision(600, Action::Send, 0.4),
            resolution(603, 600, Outcome::answered(3.0), 0.729),
            decision(DAY + 600, Action::Send, 0.6),
            resolution(DAY + 601, DAY + 600, Outcome::Dismissed, -5.0),
            decision(DAY + 700, Action::Send, 0.6),
            resolution(DAY + 701, DAY + 700, Outcome::answered(1.0), 0.9),
        ];
        assert_eq!(confidence_trace(&events).len(), 3);
        let daily = daily_rewards(&events);
        assert_eq!(daily.len(), 2);
        assert_eq!(daily[0], (0, 0.729));
        assert!((daily[1].1 - (-4.1)).abs() < 1e-12);
    }

    #[test]
    fn group_means() {
        let mk = |user: &str, week, reward, phase| WeeklyMetrics {
            user: user.into(),
            phase,
            week,
            sent: 10,
            answered: 5,
            dismissed: 1,
            ignored: 4,
            answer_rate: 0.5,
            dismiss_rate: 0.1,
            reward,
            factual_answers: 0,
            correct_answers: 0,
            accuracy: 0.0,
            consulted: 0,
            mean_confidence: 0.0,
        };
        let rows = vec![
            mk("a", 1, 1.0, Phase::Rl),
            mk("a", 2, 2.0, Phase::Rl),
            mk("b", 1, 6.0, Phase::Rl),
            mk("c", 1, -3.0, Phase::SlTrain),
        ];
        let g = group_summary(&rows);
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].phase, Phase::Rl);
        assert_eq!(g[0].rows, 3);
        assert_eq!(g[0].reward, 3.0);
        assert_eq!(g[1].reward, -3.0);
    }
}
