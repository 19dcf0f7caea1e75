//! Batch studies: simulated users driven minute by minute through their own
//! scheduling engines, summarized per week.

mod metrics;
mod report;

pub use metrics::{
    confidence_trace, daily_rewards, group_summary, weekly_metrics, ConfidencePoint, GroupMetrics, Phase, StudySummary,
    WeeklyMetrics,
};
pub use report::{read_events, report, write_run, ReportError};

use std::collections::HashSet;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::a2c::{Action, Hyperparameters};
use crate::engine::{EngineConfig, EngineError, EventRecord, Policy, SupervisedPolicy, UserEngine};
use crate::features::MINUTES_PER_DAY;
use crate::forest::RandomSchedule;
use crate::microtask::{MicrotaskError, MicrotaskPool};
use crate::reward::Outcome;
use crate::simulator::{Archetype, ProfileError, ScheduledChange, SimProfile, UserSimulator};

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("invalid study config: {0}")]
    Config(String),
    #[error("user {user}: {source}")]
    Profile { user: String, source: ProfileError },
    #[error("user {user}: {source}")]
    Engine { user: String, source: EngineError },
    #[error(transparent)]
    Pool(#[from] MicrotaskError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Rl,
    Sl,
    Random,
    AlwaysSilent,
    AlwaysSend,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    HighResponder,
    LowResponder,
    ScreenGated,
    MultiFactor,
    DeterministicScreenGated,
    WeekendBoosted,
}

impl Preset {
    pub fn profile(self) -> SimProfile {
        match self {
            Preset::HighResponder => SimProfile::archetype(Archetype::HighResponder),
            Preset::LowResponder => SimProfile::archetype(Archetype::LowResponder),
            Preset::ScreenGated => SimProfile::archetype(Archetype::ScreenGated),
            Preset::MultiFactor => SimProfile::archetype(Archetype::MultiFactor),
            Preset::DeterministicScreenGated => SimProfile::deterministic_screen_gated(),
            Preset::WeekendBoosted => SimProfile::weekend_boosted(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileSpec {
    Preset { preset: Preset },
    Full(SimProfile),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSpec {
    pub id: String,
    pub agent: AgentKind,
    pub profile: ProfileSpec,
    /// Appended to the profile's own preference schedule.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub changes: Vec<ScheduledChange>,
}

impl UserSpec {
    pub fn new(id: impl Into<String>, agent: AgentKind, preset: Preset) -> Self {
        UserSpec {
            id: id.into(),
            agent,
            profile: ProfileSpec::Preset { preset },
            changes: Vec::new(),
        }
    }

    pub fn resolved_profile(&self) -> SimProfile {
        let mut p = match &self.profile {
            ProfileSpec::Preset { preset } => preset.profile(),
            ProfileSpec::Full(p) => p.clone(),
        };
        p.preference_schedule.extend(self.changes.iter().cloned());
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SupervisedConfig {
    pub training_weeks: u64,
    pub tau_minutes: u32,
    pub send_probability: f64,
    pub retrain: bool,
}

impl Default for SupervisedConfig {
    fn default() -> Self {
        SupervisedConfig {
            training_weeks: 3,
            tau_minutes: 30,
            send_probability: 0.5,
            retrain: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PoolSpec {
    File { file: PathBuf },
    Generated { per_type: usize },
}

impl Default for PoolSpec {
    fn default() -> Self {
        PoolSpec::Generated { per_type: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub users: Vec<UserSpec>,
    #[serde(default = "default_weeks")]
    pub weeks: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub engine: EngineConfig,
    #[serde(default)]
    pub hyperparameters: Hyperparameters,
    #[serde(default)]
    pub supervised: SupervisedConfig,
    #[serde(default)]
    pub pool: PoolSpec,
}

fn default_weeks() -> u64 {
    5
}

impl StudyConfig {
    pub fn new(users: Vec<UserSpec>, weeks: u64, seed: u64) -> Self {
        StudyConfig {
            users,
            weeks,
            seed,
            engine: EngineConfig::default(),
            hyperparameters: Hyperparameters::default(),
            supervised: SupervisedConfig::default(),
            pool: PoolSpec::default(),
        }
    }

    pub fn validate(&self) -> Result<(), StudyError> {
        if self.weeks == 0 {
            return Err(StudyError::Config("weeks must be at least 1".into()));
        }
        if self.users.is_empty() {
            return Err(StudyError::Config("no users".into()));
        }
        let mut seen = HashSet::new();
        for u in &self.users {
            if u.id.is_empty() || !u.id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                return Err(StudyError::Config(format!("user id {:?} must be [A-Za-z0-9_-]+", u.id)));
            }
            if !seen.insert(u.id.as_str()) {
                return Err(StudyError::Config(format!("duplicate user id {}", u.id)));
            }
            u.resolved_profile().validate().map_err(|source| StudyError::Profile {
                user: u.id.clone(),
                source,
            })?;
        }
        self.engine
            .validate()
            .map_err(|e| StudyError::Config(e.to_string()))?;
        self.hyperparameters
            .validate()
            .map_err(|e| StudyError::Config(e.to_string()))?;
        let sl = &self.supervised;
        if sl.tau_minutes == 0 || !(0.0..=1.0).contains(&sl.send_probability) {
            return Err(StudyError::Config("supervised schedule out of range".into()));
        }
        if let PoolSpec::Generated { per_type: 0 } = self.pool {
            return Err(StudyError::Config("pool.per_type must be positive".into()));
        }
        Ok(())
    }

    pub fn days(&self) -> u64 {
        self.weeks * 7
    }

    pub fn schedule(&self) -> RandomSchedule {
        RandomSchedule {
            tau_minutes: self.supervised.tau_minutes,
            send_probability: self.supervised.send_probability,
            window_start: self.engine.window_start,
            window_end: self.engine.window_end,
        }
    }

    pub fn build_pool(&self) -> Result<MicrotaskPool, StudyError> {
        match &self.pool {
            PoolSpec::File { file } => Ok(MicrotaskPool::load_json(file)?),
            PoolSpec::Generated { per_type } => {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, "pool", 0));
                Ok(MicrotaskPool::default_pool(&mut rng, *per_type))
            }
        }
    }
}

/// Seed for one (user, stream) pair. Keyed by user id so adding a user does
/// not perturb the others.
pub fn derive_seed(study_seed: u64, user: &str, stream: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in user.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut x = h ^ study_seed.rotate_left(17) ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Fresh policy for an agent kind.
pub fn initial_policy(
    kind: AgentKind,
    hp: &Hyperparameters,
    supervised: &SupervisedConfig,
    schedule: RandomSchedule,
    seed: u64,
) -> Result<Policy, EngineError> {
    Ok(match kind {
        AgentKind::Rl => Policy::a2c(hp.clone(), seed)?,
        AgentKind::Sl => {
            let mut sl = SupervisedPolicy::new(schedule, supervised.training_weeks * 7, seed);
            sl.retrain = supervised.retrain;
            Policy::Supervised(sl)
        }
        AgentKind::Random => Policy::Random { schedule },
        AgentKind::AlwaysSilent => Policy::Fixed { action: Action::Silent },
        AgentKind::AlwaysSend => Policy::Fixed { action: Action::Send },
    })
}

/// Everything one simulated participant produced.
#[derive(Debug, Clone, PartialEq)]
pub struct UserRun {
    pub spec: UserSpec,
    pub events: Vec<EventRecord>,
    pub policy: Policy,
    pub engine: UserEngine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub users: Vec<UserRun>,
}

struct Due {
    minute: u64,
    notification_id: u64,
    outcome: Outcome,
}

/// Runs one user over `days` days of active-window minutes.
pub fn simulate_user(
    spec: &UserSpec,
    config: &StudyConfig,
    pool: &MicrotaskPool,
    days: u64,
) -> Result<UserRun, StudyError> {
    let user = spec.id.as_str();
    let wrap = |source: EngineError| StudyError::Engine {
        user: user.to_string(),
        source,
    };
    let mut sim = UserSimulator::new(spec.resolved_profile(), derive_seed(config.seed, user, 1)).map_err(|source| {
        StudyError::Profile {
            user: user.to_string(),
            source,
        }
    })?;
    let mut engine = UserEngine::new(user, config.engine.clone(), derive_seed(config.seed, user, 2)).map_err(wrap)?;
    let mut policy = initial_policy(
        spec.agent,
        &config.hyperparameters,
        &config.supervised,
        config.schedule(),
        derive_seed(config.seed, user, 3),
    )
    .map_err(wrap)?;

    let mut events = Vec::new();
    let mut due: Option<Due> = None;
    let day_len = u64::from(MINUTES_PER_DAY);
    let window = u64::from(config.engine.window_start)..u64::from(config.engine.window_end);

    let deliver = |engine: &mut UserEngine,
                       policy: &mut Policy,
                       events: &mut Vec<EventRecord>,
                       due: &mut Option<Due>,
                       minute: u64|
     -> Result<(), EngineError> {
        if let Some(d) = due.take_if(|d| d.minute <= minute) {
            // A replacement may already have scored it as Ignored.
            if engine.pending().map(|p| p.id) == Some(d.notification_id) {
                engine.resolve(Some(d.notification_id), d.outcome, d.minute, policy, pool, events)?;
            }
        }
        Ok(())
    };

    for day in 0..days {
        for tod in window.clone() {
            let minute = day * day_len + tod;
            deliver(&mut engine, &mut policy, &mut events, &mut due, minute).map_err(wrap)?;
            let ctx = sim.context(minute);
            let out = engine.tick(ctx, minute, &mut policy, pool, &mut events).map_err(wrap)?;
            if let (Some(task), Some(id)) = (&out.microtask, out.notification_id) {
                let response = sim.respond(&out.context, task, minute);
                due = response.delay_minutes.map(|t| Due {
                    minute: minute + u64::from(t.max(1)),
                    notification_id: id,
                    outcome: response.outcome,
                });
            }
        }
    }
    let end = days * day_len;
    deliver(&mut engine, &mut policy, &mut events, &mut due, end).map_err(wrap)?;
    engine.expire(end, &mut policy, &mut events);

    Ok(UserRun {
        spec: spec.clone(),
        events,
        policy,
        engine,
    })
}

/// Simulates every user in parallel; results come back in config order.
pub fn run_study(config: &StudyConfig) -> Result<StudyResult, StudyError> {
    config.validate()?;
    let pool = config.build_pool()?;
    let days = config.days();
    let users = config
        .users
        .par_iter()
        .map(|spec| simulate_user(spec, config, &pool, days))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(StudyResult { users })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{EventKind, PolicySource};

    fn small_config(agent: AgentKind, preset: Preset, weeks: u64) -> StudyConfig {
        let mut c = StudyConfig::new(vec![UserSpec::new("u1", agent, preset)], weeks, 11);
        c.hyperparameters.hidden_units = 16;
        c
    }

    #[test]
    fn always_silent_sends_nothing() {
        let c = small_config(AgentKind::AlwaysSilent, Preset::HighResponder, 1);
        let r = run_study(&c).unwrap();
        let rows = weekly_metrics("u1", r.users[0].spec.agent, &r.users[0].events, 1, 3);
        assert_eq!(rows.len(), 1);
        let w = &rows[0];
        assert_eq!((w.sent, w.answered, w.dismissed, w.ignored), (0, 0, 0, 0));
        assert_eq!((w.answer_rate, w.dismiss_rate, w.reward), (0.0, 0.0, 0.0));
    }

    #[test]
    fn every_send_is_resolved_once() {
        let c = small_config(AgentKind::AlwaysSend, Preset::MultiFactor, 1);
        let r = run_study(&c).unwrap();
        let ev = &r.users[0].events;
        let mut sent: Vec<u64> = ev
            .iter()
            .filter(|e| e.event == EventKind::Decision && e.action == Some(Action::Send))
            .map(|e| e.notification_id.unwrap())
            .collect();
        let mut resolved: Vec<u64> = ev
            .iter()
            .filter(|e| e.event == EventKind::Resolution)
            .map(|e| e.notification_id.unwrap())
            .collect();
        sent.sort_unstable();
        resolved.sort_unstable();
        assert_eq!(sent, resolved);
        assert_eq!(sent.len(), 7 * 150);
    }

    #[test]
    fn supervised_phases_follow_the_boundary() {
        let mut c = small_config(AgentKind::Sl, Preset::ScreenGated, 2);
        c.supervised.training_weeks = 1;
        let r = run_study(&c).unwrap();
        for e in r.users[0].events.iter().filter(|e| e.is_consulted_decision()) {
            let expected = if e.minute < 7 * 1440 {
                PolicySource::Random
            } else {
                PolicySource::Forest
            };
            assert_eq!(e.source, Some(expected));
        }
    }

    #[test]
    fn config_round_trips_and_validates() {
        let json = r#"{
            "weeks": 2,
            "users": [
                {"id": "a", "agent": "rl", "profile": {"preset": "screen_gated"}},
                {"id": "b", "agent": "sl", "profile": {"preset": "high_responder"},
                 "changes": [{"day": 3, "change": {"kind": "archetype", "archetype": "LowResponder"}}]}
            ]
        }"#;
        let c: StudyConfig = serde_json::from_str(json).unwrap();
        c.validate().unwrap();
        assert_eq!(c.users[1].resolved_profile().preference_schedule.len(), 1);
        let back: StudyConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);

        let mut dup = c.clone();
        dup.users[1].id = "a".into();
        assert!(dup.validate().is_err());
        let mut zero = c;
        zero.weeks = 0;
        assert!(zero.validate().is_err());
    }

    #[test]
    fn seeds_are_per_user() {
        assert_eq!(derive_seed(1, "a", 0), derive_seed(1, "a", 0));
        assert_ne!(derive_seed(1, "a", 0), derive_seed(1, "b", 0));
        assert_ne!(derive_seed(1, "a", 0), derive_seed(2, "a", 0));
        assert_ne!(derive_seed(1, "a", 0), derive_seed(1, "a", 1));
    }
}
