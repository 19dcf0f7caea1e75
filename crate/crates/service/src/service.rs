use std::path::PathBuf;
use std::sync::Arc;

use nudge_core::a2c::Action;
use nudge_core::engine::{EngineError, EventKind, EventRecord, UserEngine};
use nudge_core::features::{UserContext, MINUTES_PER_DAY};
use nudge_core::forest::RandomSchedule;
use nudge_core::microtask::{Microtask, MicrotaskPool};
use nudge_core::persist::write_atomic;
use nudge_core::reward::Outcome;
use nudge_core::study::{derive_seed, initial_policy, AgentKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::{valid_user_id, Store, StoreError, UserSettings, UserState};

const DAY: u64 = MINUTES_PER_DAY as u64;
const WEEK: u64 = 7 * DAY;

/// Questions per type in a freshly generated pool.
pub const DEFAULT_POOL_PER_TYPE: usize = 20;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl From<EngineError> for ServiceError {
    fn from(e: EngineError) -> Self {
        ServiceError::Invalid(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegisterRequest {
    pub user_id: String,
    pub agent_kind: AgentKind,
    #[serde(default)]
    pub config: UserSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Answered,
    Dismissed,
    Ignored,
}

/// The client's report on the last notification, piggybacked on the next request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreviousResponse {
    pub notification_id: u64,
    pub outcome: OutcomeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_time_minutes: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_index: Option<usize>,
}

impl PreviousResponse {
    pub fn from_outcome(notification_id: u64, outcome: Outcome) -> Self {
        let (kind, t, a) = match outcome {
            Outcome::Answered {
                response_time_minutes,
                answer,
            } => (OutcomeKind::Answered, Some(response_time_minutes), answer),
            Outcome::Dismissed => (OutcomeKind::Dismissed, None, None),
            Outcome::Ignored => (OutcomeKind::Ignored, None, None),
        };
        PreviousResponse {
            notification_id,
            outcome: kind,
            response_time_minutes: t,
            answer_index: a,
        }
    }

    pub fn outcome(&self) -> Result<Outcome, ServiceError> {
        let outcome = match self.outcome {
            OutcomeKind::Answered => Outcome::Answered {
                response_time_minutes: self
                    .response_time_minutes
                    .ok_or_else(|| ServiceError::Invalid("answered response needs response_time_minutes".into()))?,
                answer: self.answer_index,
            },
            kind => {
                if self.response_time_minutes.is_some() || self.answer_index.is_some() {
                    return Err(ServiceError::Invalid(format!(
                        "{kind:?} response cannot carry a response time or answer"
                    )));
                }
                if kind == OutcomeKind::Dismissed {
                    Outcome::Dismissed
                } else {
                    Outcome::Ignored
                }
            }
        };
        outcome.validate().map_err(|e| ServiceError::Invalid(e.to_string()))?;
        Ok(outcome)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub user_id: String,
    pub context: UserContext,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub previous_response: Option<PreviousResponse>,
    /// Absolute minute on the user's clock. When absent it is the first
    /// minute after the previous request matching the context's day and time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minute: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionResponse {
    pub action: Action,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub microtask: Option<Microtask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notification_id: Option<u64>,
    /// P(Send); 0 when the window or cap forced silence.
    pub confidence: f64,
    pub minute: u64,
}

/// Resolves the absolute minute of a request from its context.
pub fn next_minute(last: Option<u64>, ctx: &UserContext) -> u64 {
    let offset = u64::from(ctx.day_of_week) * DAY + u64::from(ctx.time_of_day);
    match last {
        None => offset,
        Some(last) => {
            let m = last - last % WEEK + offset;
            if m > last {
                m
            } else {
                m + WEEK
            }
        }
    }
}

/// Stateless front-end logic: every call reads the user's state from the
/// store and writes it back before returning.
#[derive(Debug, Clone)]
pub struct Service {
    store: Store,
    pool: Arc<MicrotaskPool>,
}

impl Service {
    /// Opens a store, generating its microtask pool on first use.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, ServiceError> {
        let store = Store::open(root)?;
        let path = store.root().join("pool.json");
        let pool = match std::fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(StoreError::from)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(0, "pool", 0));
                let pool = MicrotaskPool::default_pool(&mut rng, DEFAULT_POOL_PER_TYPE);
                let bytes = serde_json::to_vec(&pool).map_err(StoreError::from)?;
                write_atomic(&path, &bytes).map_err(|source| StoreError::Io {
                    path: path.clone(),
                    source,
                })?;
                pool
            }
            Err(source) => return Err(StoreError::Io { path, source }.into()),
        };
        Ok(Service {
            store,
            pool: Arc::new(pool),
        })
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn pool(&self) -> &MicrotaskPool {
        &self.pool
    }

    pub fn register_user(&self, req: &RegisterRequest) -> Result<(), ServiceError> {
        if !valid_user_id(&req.user_id) {
            return Err(ServiceError::Invalid(format!(
                "user id {:?} must be 1-64 characters of [A-Za-z0-9_-]",
                req.user_id
            )));
        }
        let s = &req.config;
        s.engine.validate()?;
        s.hyperparameters
            .validate()
            .map_err(|e| ServiceError::Invalid(e.to_string()))?;
        let schedule = RandomSchedule {
            tau_minutes: s.supervised.tau_minutes,
            send_probability: s.supervised.send_probability,
            window_start: s.engine.window_start,
            window_end: s.engine.window_end,
        };
        if s.supervised.tau_minutes == 0 || !(0.0..=1.0).contains(&s.supervised.send_probability) {
            return Err(ServiceError::Invalid("supervised schedule out of range".into()));
        }
        let user = req.user_id.as_str();
        let policy = initial_policy(
            req.agent_kind,
            &s.hyperparameters,
            &s.supervised,
            schedule,
            derive_seed(s.seed, user, 3),
        )?;
        let engine = UserEngine::new(user, s.engine.clone(), derive_seed(s.seed, user, 2))?;
        self.store.create(&UserState {
            user: user.to_string(),
            agent: req.agent_kind,
            settings: s.clone(),
            engine,
            policy,
            log_bytes: 0,
            requests: 0,
        })?;
        tracing::info!(user, agent = ?req.agent_kind, "registered");
        Ok(())
    }

    /// Applies the piggybacked response, makes the decision for this minute,
    /// and commits both before returning.
    pub fn handle_request(&self, req: &DecisionRequest) -> Result<DecisionResponse, ServiceError> {
        let previous = req.previous_response.as_ref().map(|p| p.outcome().map(|o| (p.notification_id, o)));
        let previous = previous.transpose()?;

        let lock = self.store.lock(&req.user_id)?;
        let mut state = self.store.load(&lock)?;
        let minute = match req.minute {
            None => next_minute(state.engine.last_minute(), &req.context),
            Some(m) => {
                if m % DAY != u64::from(req.context.time_of_day) || (m / DAY) % 7 != u64::from(req.context.day_of_week) {
                    return Err(ServiceError::Invalid(format!(
                        "minute {m} disagrees with the context's day and time"
                    )));
                }
                m
            }
        };
        if let Some(last) = state.engine.last_minute() {
            if minute <= last {
                return Err(EngineError::ClockRegression { last, minute }.into());
            }
        }

        let mut log = Vec::new();
        if let Some((id, outcome)) = previous {
            match state
                .engine
                .resolve(Some(id), outcome, minute, &mut state.policy, &self.pool, &mut log)
            {
                Ok(_) => {}
                // Responses for notifications already replaced or timed out.
                Err(e @ (EngineError::NoPending | EngineError::WrongNotification { .. })) => {
                    let mut rec = EventRecord::new(&state.user, minute, EventKind::Fault);
                    rec.notification_id = Some(id);
                    rec.outcome = Some(outcome);
                    rec.detail = Some(format!("stale response: {e}"));
                    log.push(rec);
                }
                Err(e) => return Err(e.into()),
            }
        }
        let out = state
            .engine
            .tick(req.context, minute, &mut state.policy, &self.pool, &mut log)?;
        state.requests += 1;
        self.store.commit(&lock, &mut state, &log)?;

        Ok(DecisionResponse {
            action: out.action,
            microtask: out.microtask,
            notification_id: out.notification_id,
            confidence: out.confidence.unwrap_or(0.0),
            minute,
        })
    }

    pub fn load_user(&self, user: &str) -> Result<UserState, ServiceError> {
        let lock = self.store.lock(user)?;
        Ok(self.store.load(&lock)?)
    }
}
