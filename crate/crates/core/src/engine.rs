//! Per-user scheduling loop: decision ticks, the notification lifecycle,
//! deferred reward attribution and the rollout pump that feeds the
//! actor-critic learner.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::a2c::{A2cAgent, A2cError, Action, Hyperparameters, Rollout, Step, TrainMetrics};
use crate::features::{encode, Observation, UserContext, MINUTES_PER_DAY};
use crate::forest::{self, grid_search, ForestError, ForestModel, GridCell, Label, LabeledExample, RandomSchedule};
use crate::microtask::{self, Microtask, MicrotaskPool, Verdict};
use crate::reward::{reward, reward_for_silent, Outcome, RewardConfig, RewardError};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("clock went backwards: minute {minute} after {last}")]
    ClockRegression { last: u64, minute: u64 },
    #[error("no pending notification to resolve")]
    NoPending,
    #[error("outcome for notification {got} but {pending} is pending")]
    WrongNotification { pending: u64, got: u64 },
    #[error(transparent)]
    Outcome(#[from] RewardError),
    #[error(transparent)]
    Agent(#[from] A2cError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Microtask(#[from] microtask::MicrotaskError),
    #[error("invalid engine configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    /// Start of the active window, minutes since midnight (inclusive).
    pub window_start: u32,
    /// End of the active window (exclusive).
    pub window_end: u32,
    pub daily_cap: u32,
    pub timeout_minutes: u64,
    pub reward: RewardConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            window_start: 10 * 60,
            window_end: 22 * 60,
            daily_cap: 150,
            timeout_minutes: 60,
            reward: RewardConfig::default(),
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.daily_cap == 0 {
            return Err(EngineError::Config("daily_cap must be positive".into()));
        }
        if self.window_start >= self.window_end || self.window_end > MINUTES_PER_DAY {
            return Err(EngineError::Config("active window must lie within one day".into()));
        }
        if self.timeout_minutes == 0 {
            return Err(EngineError::Config("timeout must be positive".into()));
        }
        self.reward.validate()?;
        Ok(())
    }

    pub fn in_window(&self, minute: u64) -> bool {
        let tod = (minute % u64::from(MINUTES_PER_DAY)) as u32;
        tod >= self.window_start && tod < self.window_end
    }

    pub fn active_minutes_per_day(&self) -> u32 {
        self.window_end - self.window_start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicySource {
    A2c,
    Random,
    Forest,
    Fixed,
    /// Window or cap forced silence; no policy was consulted.
    Forced,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyDecision {
    pub action: Action,
    /// Probability of Send under the consulted policy.
    pub confidence: f64,
    pub source: PolicySource,
}

/// The supervised baseline: a random schedule while labels are collected,
/// then a frozen random forest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisedPolicy {
    pub schedule: RandomSchedule,
    pub training_days: u64,
    /// Refit the forest at every week boundary of the test phase.
    pub retrain: bool,
    pub seed: u64,
    start_day: Option<u64>,
    model: Option<ForestModel>,
    chosen: Option<GridCell>,
    examples: Vec<LabeledExample>,
}

impl SupervisedPolicy {
    pub fn new(schedule: RandomSchedule, training_days: u64, seed: u64) -> Self {
        SupervisedPolicy {
            schedule,
            training_days,
            retrain: false,
            seed,
            start_day: None,
            model: None,
            chosen: None,
            examples: Vec::new(),
        }
    }

    pub fn model(&self) -> Option<&ForestModel> {
        self.model.as_ref()
    }

    pub fn chosen_cell(&self) -> Option<GridCell> {
        self.chosen
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    fn fit(&mut self) -> Result<(), ForestError> {
        if self.examples.is_empty() {
            // Nothing was ever sent; stay silent.
            self.model = Some(ForestModel::constant(Label::Negative, self.seed));
            return Ok(());
        }
        let result = grid_search(&self.examples, self.seed)?;
        self.chosen = Some(result.chosen);
        self.model = Some(result.model);
        Ok(())
    }

    /// Returns true when the forest was (re)fitted.
    fn on_day(&mut self, day: u64) -> Result<bool, ForestError> {
        let start = *self.start_day.get_or_insert(day);
        let boundary = start.saturating_add(self.training_days);
        if day < boundary {
            return Ok(false);
        }
        if self.model.is_none() || (self.retrain && (day - boundary) % 7 == 0 && day > boundary) {
            self.fit()?;
            return Ok(true);
        }
        Ok(false)
    }

    fn collecting(&self) -> bool {
        self.model.is_none() || self.retrain
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Policy {
    A2c(A2cAgent),
    Supervised(SupervisedPolicy),
    /// The label-collection schedule on its own, never replaced by a model.
    Random { schedule: RandomSchedule },
    Fixed { action: Action },
}

impl Policy {
    pub fn a2c(hp: Hyperparameters, seed: u64) -> Result<Self, A2cError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Policy::A2c(A2cAgent::new(hp, &mut rng)?))
    }

    pub fn is_learning(&self) -> bool {
        matches!(self, Policy::A2c(_))
    }

    fn decide(&self, obs: &Observation, minute: u64, rng: &mut ChaCha8Rng) -> Result<PolicyDecision, EngineError> {
        Ok(match self {
            Policy::A2c(agent) => {
                let (action, confidence) = agent.act(obs, rng)?;
                PolicyDecision {
                    action,
                    confidence,
                    source: PolicySource::A2c,
                }
            }
            Policy::Supervised(sl) => match &sl.model {
                Some(model) => {
                    let (action, confidence) = forest::predict(model, obs)?;
                    PolicyDecision {
                        action,
                        confidence,
                        source: PolicySource::Forest,
                    }
                }
                None => {
                    let (action, confidence) = sl.schedule.decide(minute, rng);
                    PolicyDecision {
                        action,
                        confidence,
                        source: PolicySource::Random,
                    }
                }
            },
            Policy::Random { schedule } => {
                let (action, confidence) = schedule.decide(minute, rng);
                PolicyDecision {
                    action,
                    confidence,
                    source: PolicySource::Random,
                }
            }
            Policy::Fixed { action } => PolicyDecision {
                action: *action,
                confidence: if *action == Action::Send { 1.0 } else { 0.0 },
                source: PolicySource::Fixed,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingNotification {
    pub id: u64,
    pub microtask_id: u32,
    pub sent_at: u64,
    /// Index of the Send transition awaiting this notification's reward.
    pub transition: Option<u64>,
    pub obs: Observation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferedTransition {
    pub index: u64,
    pub obs: Observation,
    pub action: Action,
    /// `None` until the notification's outcome is known.
    pub reward: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Decision,
    Resolution,
    Training,
    Fault,
    PhaseChange,
}

/// One line of the append-only event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub user: String,
    pub minute: u64,
    pub event: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<UserContext>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<Action>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<PolicySource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notification_id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub microtask_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Outcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sent_at: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl EventRecord {
    pub fn new(user: &str, minute: u64, event: EventKind) -> Self {
        EventRecord {
            user: user.to_string(),
            minute,
            event,
            context: None,
            action: None,
            confidence: None,
            source: None,
            notification_id: None,
            microtask_id: None,
            outcome: None,
            reward: None,
            sent_at: None,
            verdict: None,
            detail: None,
        }
    }

    /// True for decisions where a policy was actually asked.
    pub fn is_consulted_decision(&self) -> bool {
        self.event == EventKind::Decision && self.source != Some(PolicySource::Forced)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickOutcome {
    pub action: Action,
    pub confidence: Option<f64>,
    pub source: PolicySource,
    pub microtask: Option<Microtask>,
    pub notification_id: Option<u64>,
    pub context: UserContext,
    pub trained: Option<TrainMetrics>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineCounters {
    pub ticks: u64,
    pub consulted: u64,
    pub sends: u64,
    pub resolutions: u64,
    pub train_steps: u64,
}

/// Scheduling state of one user. Owns the random stream used for policy
/// sampling, microtask selection and minibatch shuffling, so a serialized
/// engine resumes exactly where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserEngine {
    pub user: String,
    config: EngineConfig,
    rng: ChaCha8Rng,
    last_minute: Option<u64>,
    current_day: Option<u64>,
    sends_today: u32,
    pending: Option<PendingNotification>,
    last_send_minute: Option<u64>,
    next_notification_id: u64,
    next_transition: u64,
    buffer: Vec<BufferedTransition>,
    counters: EngineCounters,
}

impl UserEngine {
    pub fn new(user: impl Into<String>, config: EngineConfig, seed: u64) -> Result<Self, EngineError> {
        config.validate()?;
        Ok(UserEngine {
            user: user.into(),
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            last_minute: None,
            current_day: None,
            sends_today: 0,
            pending: None,
            last_send_minute: None,
            next_notification_id: 1,
            next_transition: 0,
            buffer: Vec::new(),
            counters: EngineCounters::default(),
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn pending(&self) -> Option<&PendingNotification> {
        self.pending.as_ref()
    }

    pub fn counters(&self) -> EngineCounters {
        self.counters
    }

    pub fn buffer(&self) -> &[BufferedTransition] {
        &self.buffer
    }

    pub fn last_minute(&self) -> Option<u64> {
        self.last_minute
    }

    pub fn sends_today(&self) -> u32 {
        self.sends_today
    }

    /// Auto-resolves a pending notification as Ignored once it has timed out.
    pub fn expire(&mut self, minute: u64, policy: &mut Policy, log: &mut Vec<EventRecord>) -> Option<f64> {
        let due = self.pending.as_ref().is_some_and(|p| minute >= p.sent_at + self.config.timeout_minutes);
        if due {
            Some(self.credit(Outcome::Ignored, minute, policy, None, log))
        } else {
            None
        }
    }

    /// Applies a reported outcome to the pending notification and returns the credited reward.
    pub fn resolve(
        &mut self,
        notification_id: Option<u64>,
        outcome: Outcome,
        minute: u64,
        policy: &mut Policy,
        pool: &MicrotaskPool,
        log: &mut Vec<EventRecord>,
    ) -> Result<f64, EngineError> {
        outcome.validate()?;
        let pending = self.pending.as_ref().ok_or(EngineError::NoPending)?;
        if let Some(id) = notification_id {
            if id != pending.id {
                return Err(EngineError::WrongNotification {
                    pending: pending.id,
                    got: id,
                });
            }
        }
        let verdict = match outcome {
            Outcome::Answered { answer: Some(a), .. } => match pool.get(pending.microtask_id) {
                Some(task) => Some(microtask::verify(task, a)?),
                None => None,
            },
            _ => None,
        };
        Ok(self.credit(outcome, minute, policy, verdict, log))
    }

    fn credit(
        &mut self,
        outcome: Outcome,
        minute: u64,
        policy: &mut Policy,
        verdict: Option<Verdict>,
        log: &mut Vec<EventRecord>,
    ) -> f64 {
        let pending = self.pending.take().expect("credit requires a pending notification");
        let r = reward(&outcome, &self.config.reward);
        if let Some(idx) = pending.transition {
            if let Some(t) = self.buffer.iter_mut().find(|t| t.index == idx) {
                t.reward = Some(r);
            }
        }
        if let Policy::Supervised(sl) = policy {
            if sl.collecting() {
                sl.examples.push(LabeledExample {
                    features: pending.obs,
                    label: if outcome.is_answered() { Label::Positive } else { Label::Negative },
                    reward: r,
                });
            }
        }
        self.counters.resolutions += 1;
        let mut rec = EventRecord::new(&self.user, minute, EventKind::Resolution);
        rec.notification_id = Some(pending.id);
        rec.microtask_id = Some(pending.microtask_id);
        rec.outcome = Some(outcome);
        rec.reward = Some(r);
        rec.sent_at = Some(pending.sent_at);
        rec.verdict = verdict;
        log.push(rec);
        r
    }

    /// One decision minute.
    ///
    /// Outside the active window, or once the daily cap is reached, the
    /// result is Silent without consulting the policy and no transition is
    /// recorded. A Send replaces (and scores as Ignored) any pending
    /// notification.
    pub fn tick(
        &mut self,
        mut ctx: UserContext,
        minute: u64,
        policy: &mut Policy,
        pool: &MicrotaskPool,
        log: &mut Vec<EventRecord>,
    ) -> Result<TickOutcome, EngineError> {
        if let Some(last) = self.last_minute {
            if minute <= last {
                return Err(EngineError::ClockRegression { last, minute });
            }
        }
        self.last_minute = Some(minute);
        self.counters.ticks += 1;

        let day = minute / u64::from(MINUTES_PER_DAY);
        if self.current_day != Some(day) {
            self.current_day = Some(day);
            self.sends_today = 0;
            if let Policy::Supervised(sl) = policy {
                if sl.on_day(day)? {
                    let mut rec = EventRecord::new(&self.user, minute, EventKind::PhaseChange);
                    rec.detail = Some(format!(
                        "forest fitted on {} examples: {:?}",
                        sl.examples.len(),
                        sl.chosen
                    ));
                    log.push(rec);
                }
            }
        }

        self.expire(minute, policy, log);

        if let Some(last_send) = self.last_send_minute {
            ctx.elapsed_since_last_notification = (minute - last_send) as f64;
        }

        let mut rec = EventRecord::new(&self.user, minute, EventKind::Decision);
        rec.context = Some(ctx);

        if !self.config.in_window(minute) || self.sends_today >= self.config.daily_cap {
            rec.action = Some(Action::Silent);
            rec.source = Some(PolicySource::Forced);
            log.push(rec);
            return Ok(TickOutcome {
                action: Action::Silent,
                confidence: None,
                source: PolicySource::Forced,
                microtask: None,
                notification_id: None,
                context: ctx,
                trained: None,
            });
        }

        let obs = encode(&ctx);
        let decision = policy.decide(&obs, minute, &mut self.rng)?;
        self.counters.consulted += 1;

        let transition = if policy.is_learning() {
            let index = self.next_transition;
            self.next_transition += 1;
            self.buffer.push(BufferedTransition {
                index,
                obs,
                action: decision.action,
                reward: match decision.action {
                    Action::Silent => Some(reward_for_silent(&self.config.reward)),
                    Action::Send => None,
                },
            });
            Some(index)
        } else {
            None
        };

        let mut microtask = None;
        let mut notification_id = None;
        if decision.action == Action::Send {
            if self.pending.is_some() {
                self.credit(Outcome::Ignored, minute, policy, None, log);
            }
            let task = pool.sample(&mut self.rng).clone();
            let id = self.next_notification_id;
            self.next_notification_id += 1;
            self.pending = Some(PendingNotification {
                id,
                microtask_id: task.id,
                sent_at: minute,
                transition,
                obs,
            });
            self.sends_today += 1;
            self.counters.sends += 1;
            self.last_send_minute = Some(minute);
            rec.notification_id = Some(id);
            rec.microtask_id = Some(task.id);
            microtask = Some(task);
            notification_id = Some(id);
        }

        rec.action = Some(decision.action);
        rec.confidence = Some(decision.confidence);
        rec.source = Some(decision.source);
        log.push(rec);

        let trained = self.rollout_pump(minute, policy, log)?;

        Ok(TickOutcome {
            action: decision.action,
            confidence: Some(decision.confidence),
            source: decision.source,
            microtask,
            notification_id,
            context: ctx,
            trained,
        })
    }

    /// Number of leading buffered transitions whose reward is known.
    pub fn resolved_prefix(&self) -> usize {
        self.buffer.iter().take_while(|t| t.reward.is_some()).count()
    }

    /// Trains once a full rollout of resolved transitions is available.
    ///
    /// The transition after the rollout supplies the bootstrap observation,
    /// so training waits for one more consulted tick. A failed update is
    /// logged as a fault; the rollout is dropped and the policy keeps its
    /// previous parameters.
    pub fn rollout_pump(
        &mut self,
        minute: u64,
        policy: &mut Policy,
        log: &mut Vec<EventRecord>,
    ) -> Result<Option<TrainMetrics>, EngineError> {
        let Policy::A2c(agent) = policy else {
            return Ok(None);
        };
        let n = agent.hp.rollout_length;
        if self.buffer.len() <= n || self.resolved_prefix() < n {
            return Ok(None);
        }
        let steps: Vec<Step> = self.buffer[..n]
            .iter()
            .map(|t| Step {
                obs: t.obs,
                action: t.action,
                reward: t.reward.expect("prefix is resolved"),
                done: false,
            })
            .collect();
        let rollout = Rollout {
            steps,
            bootstrap_obs: self.buffer[n].obs,
        };
        self.buffer.drain(..n);
        if self.next_transition - (self.buffer.len() as u64) < agent.hp.heatup_steps as u64 {
            return Ok(None);
        }
        let mut last = None;
        for _ in 0..agent.hp.consecutive_training_steps {
            match agent.train(&rollout, &mut self.rng) {
                Ok(m) => {
                    self.counters.train_steps += 1;
                    let mut rec = EventRecord::new(&self.user, minute, EventKind::Training);
                    rec.detail = Some(format!(
                        "policy_loss={:.6} value_loss={:.6} entropy={:.6} grad_norm={:.6}",
                        m.policy_loss, m.value_loss, m.entropy, m.grad_norm
                    ));
                    log.push(rec);
                    last = Some(m);
                }
                Err(e) => {
                    let mut rec = EventRecord::new(&self.user, minute, EventKind::Fault);
                    rec.detail = Some(e.to_string());
                    log.push(rec);
                    break;
                }
            }
        }
        Ok(last)
    }
}
