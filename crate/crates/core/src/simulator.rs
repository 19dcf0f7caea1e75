//! Simulated study participants.
//!
//! A [`SimProfile`] bundles a daily routine (which drives the sensed context),
//! an availability model (how the user reacts to a notification in a given
//! context), a response-time law and an optional schedule of preference
//! changes. Context traces are a pure function of `(profile, seed, minute)`;
//! responses come from a seeded stream owned by the [`UserSimulator`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{Location, Motion, Ringer, Screen, UserContext, ELAPSED_CAP_MINUTES, MINUTES_PER_DAY};
use crate::microtask::Microtask;
use crate::reward::{Outcome, NOTIFICATION_TIMEOUT_MINUTES};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProfileError {
    #[error("probability out of range in {0}")]
    Probability(String),
    #[error("answer and dismiss probabilities sum above 1 in {0}")]
    Sum(String),
    #[error("preference schedule days must be strictly increasing")]
    Schedule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Archetype {
    /// Answers most notifications whatever the context.
    HighResponder,
    /// Rarely answers and dismisses often.
    LowResponder,
    /// Answers when the screen is on, otherwise ignores or dismisses.
    ScreenGated,
    /// Availability depends on several sensors at once.
    MultiFactor,
}

/// A conjunction over context fields; `None` matches anything.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Condition {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub screen: Option<Screen>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub location: Option<Location>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ringer: Option<Ringer>,
    /// Any motion other than Stationary.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub moving: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weekend: Option<bool>,
    /// Half-open range of minutes since midnight.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub minutes: Option<[u32; 2]>,
}

impl Condition {
    pub fn matches(&self, ctx: &UserContext) -> bool {
        self.screen.is_none_or(|s| s == ctx.screen)
            && self.location.is_none_or(|l| l == ctx.location)
            && self.ringer.is_none_or(|r| r == ctx.ringer)
            && self.moving.is_none_or(|m| m == (ctx.motion != Motion::Stationary))
            && self.weekend.is_none_or(|w| w == ctx.is_weekend())
            && self.minutes.is_none_or(|[a, b]| ctx.time_of_day >= a && ctx.time_of_day < b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvailabilityRule {
    #[serde(default)]
    pub when: Condition,
    pub answer: f64,
    pub dismiss: f64,
}

/// First matching rule wins; otherwise the defaults apply. The remainder
/// `1 - answer - dismiss` is the chance of ignoring the notification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Availability {
    #[serde(default)]
    pub rules: Vec<AvailabilityRule>,
    pub default_answer: f64,
    pub default_dismiss: f64,
}

fn rule(when: Condition, answer: f64, dismiss: f64) -> AvailabilityRule {
    AvailabilityRule { when, answer, dismiss }
}

impl Availability {
    pub fn for_archetype(archetype: Archetype) -> Self {
        let screen_on = Condition {
            screen: Some(Screen::On),
            ..Default::default()
        };
        match archetype {
            Archetype::HighResponder => Availability {
                rules: vec![
                    rule(screen_on, 0.85, 0.02),
                    rule(
                        Condition {
                            location: Some(Location::Work),
                            ..Default::default()
                        },
                        0.55,
                        0.3,
                    ),
                ],
                default_answer: 0.65,
                default_dismiss: 0.02,
            },
            Archetype::LowResponder => Availability {
                rules: vec![rule(screen_on, 0.12, 0.35)],
                default_answer: 0.05,
                default_dismiss: 0.3,
            },
            Archetype::ScreenGated => Availability {
                rules: vec![rule(screen_on, 0.9, 0.02)],
                default_answer: 0.1,
                default_dismiss: 0.25,
            },
            Archetype::MultiFactor => Availability {
                rules: vec![
                    rule(
                        Condition {
                            screen: Some(Screen::On),
                            ringer: Some(Ringer::Normal),
                            ..Default::default()
                        },
                        0.8,
                        0.02,
                    ),
                    rule(screen_on, 0.55, 0.3),
                    rule(
                        Condition {
                            moving: Some(true),
                            ..Default::default()
                        },
                        0.35,
                        0.0,
                    ),
                    rule(
                        Condition {
                            ringer: Some(Ringer::Normal),
                            ..Default::default()
                        },
                        0.3,
                        0.05,
                    ),
                ],
                default_answer: 0.08,
                default_dismiss: 0.2,
            },
        }
    }

    /// Noise-free screen gating: always answers at once with the screen on,
    /// always dismisses with it off.
    pub fn deterministic_screen_gated() -> Self {
        Availability {
            rules: vec![rule(
                Condition {
                    screen: Some(Screen::On),
                    ..Default::default()
                },
                1.0,
                0.0,
            )],
            default_answer: 0.0,
            default_dismiss: 1.0,
        }
    }

    pub fn probabilities(&self, ctx: &UserContext) -> (f64, f64) {
        self.rules
            .iter()
            .find(|r| r.when.matches(ctx))
            .map(|r| (r.answer, r.dismiss))
            .unwrap_or((self.default_answer, self.default_dismiss))
    }

    fn validate(&self) -> Result<(), ProfileError> {
        let pairs = self
            .rules
            .iter()
            .map(|r| (r.answer, r.dismiss))
            .chain(std::iter::once((self.default_answer, self.default_dismiss)));
        for (i, (a, d)) in pairs.enumerate() {
            if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&d) {
                return Err(ProfileError::Probability(format!("availability entry {i}")));
            }
            if a + d > 1.0 + 1e-12 {
                return Err(ProfileError::Sum(format!("availability entry {i}")));
            }
        }
        Ok(())
    }
}

/// Geometric law over whole minutes: `P(t = k) = p (1 - p)^k`. Draws beyond
/// the notification timeout become ignores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseTimeLaw {
    pub success_probability: f64,
}

impl Default for ResponseTimeLaw {
    /// `P(t <= 1) = 1 - (1 - p)^2 = 0.58`.
    fn default() -> Self {
        ResponseTimeLaw {
            success_probability: 1.0 - 0.42f64.sqrt(),
        }
    }
}

impl ResponseTimeLaw {
    pub fn immediate() -> Self {
        ResponseTimeLaw {
            success_probability: 1.0,
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> u32 {
        let p = self.success_probability;
        if p >= 1.0 {
            return 0;
        }
        let u: f64 = rng.gen();
        // Inverse CDF; 1 - u lies in (0, 1].
        ((1.0 - u).ln() / (1.0 - p).ln()).floor().min(1e6) as u32
    }
}

/// Weekend-only lift in availability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeekendBoost {
    pub answer_add: f64,
    pub dismiss_scale: f64,
}

impl WeekendBoost {
    pub fn apply(&self, (answer, dismiss): (f64, f64)) -> (f64, f64) {
        let a = (answer + self.answer_add).clamp(0.0, 1.0);
        let d = (dismiss * self.dismiss_scale).clamp(0.0, 1.0 - a);
        (a, d)
    }
}

/// Daily routine parameters. Times are minutes since midnight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Routine {
    pub work_start: u32,
    pub work_end: u32,
    pub commute_minutes: u32,
    pub lunch_out_probability: f64,
    pub evening_out_probability: f64,
    pub weekend_out_probability: f64,
    pub day_screen_on: f64,
    pub night_screen_on: f64,
    /// Length of a screen session block in minutes.
    pub screen_block: u32,
}

impl Default for Routine {
    fn default() -> Self {
        Routine {
            work_start: 9 * 60,
            work_end: 17 * 60,
            commute_minutes: 30,
            lunch_out_probability: 0.4,
            evening_out_probability: 0.2,
            weekend_out_probability: 0.35,
            day_screen_on: 0.3,
            night_screen_on: 0.02,
            screen_block: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileChange {
    /// Adopt the stock availability of an archetype.
    Archetype { archetype: Archetype },
    Availability { availability: Availability },
    WeekendBoost { boost: Option<WeekendBoost> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledChange {
    pub day: u64,
    pub change: ProfileChange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimProfile {
    pub archetype: Archetype,
    pub availability: Availability,
    #[serde(default)]
    pub response_time: ResponseTimeLaw,
    #[serde(default)]
    pub preference_schedule: Vec<ScheduledChange>,
    #[serde(default)]
    pub weekend_boost: Option<WeekendBoost>,
    #[serde(default)]
    pub routine: Routine,
    /// Probability of answering a factual microtask correctly.
    #[serde(default = "default_accuracy")]
    pub accuracy: f64,
}

fn default_accuracy() -> f64 {
    0.92
}

impl SimProfile {
    pub fn archetype(archetype: Archetype) -> Self {
        SimProfile {
            archetype,
            availability: Availability::for_archetype(archetype),
            response_time: ResponseTimeLaw::default(),
            preference_schedule: Vec::new(),
            weekend_boost: None,
            routine: Routine::default(),
            accuracy: default_accuracy(),
        }
    }

    pub fn deterministic_screen_gated() -> Self {
        SimProfile {
            availability: Availability::deterministic_screen_gated(),
            response_time: ResponseTimeLaw::immediate(),
            ..SimProfile::archetype(Archetype::ScreenGated)
        }
    }

    /// Diffuse weekday availability, clearly better on Saturdays and Sundays.
    pub fn weekend_boosted() -> Self {
        SimProfile {
            weekend_boost: Some(WeekendBoost {
                answer_add: 0.75,
                dismiss_scale: 0.1,
            }),
            ..SimProfile::archetype(Archetype::MultiFactor)
        }
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        self.availability.validate()?;
        for c in &self.preference_schedule {
            if let ProfileChange::Availability { availability } = &c.change {
                availability.validate()?;
            }
        }
        if self.preference_schedule.windows(2).any(|w| w[0].day >= w[1].day) {
            return Err(ProfileError::Schedule);
        }
        let p = self.response_time.success_probability;
        if !(p > 0.0 && p <= 1.0) {
            return Err(ProfileError::Probability("response_time".into()));
        }
        if !(0.0..=1.0).contains(&self.accuracy) {
            return Err(ProfileError::Probability("accuracy".into()));
        }
        Ok(())
    }

    /// Answer and dismiss probabilities for a notification sent in `ctx`.
    pub fn availability(&self, ctx: &UserContext) -> (f64, f64) {
        let p = self.availability.probabilities(ctx);
        match self.weekend_boost {
            Some(b) if ctx.is_weekend() => b.apply(p),
            _ => p,
        }
    }
}

/// The profile in effect on `day`: every scheduled change with `change.day <= day`
/// applied in order to `base`.
pub fn apply_schedule(base: &SimProfile, day: u64) -> SimProfile {
    let mut p = base.clone();
    for c in base.preference_schedule.iter().filter(|c| c.day <= day) {
        match &c.change {
            ProfileChange::Archetype { archetype } => {
                p.archetype = *archetype;
                p.availability = Availability::for_archetype(*archetype);
            }
            ProfileChange::Availability { availability } => p.availability = availability.clone(),
            ProfileChange::WeekendBoost { boost } => p.weekend_boost = *boost,
        }
    }
    p
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Uniform draw in [0, 1) keyed by (seed, stream, key).
fn unit(seed: u64, stream: u64, key: u64) -> f64 {
    let h = splitmix64(splitmix64(seed ^ stream.wrapping_mul(0xA24B_AED4_963E_E407)) ^ key);
    (h >> 11) as f64 / (1u64 << 53) as f64
}

const STREAM_LUNCH: u64 = 1;
const STREAM_EVENING: u64 = 2;
const STREAM_WEEKEND: u64 = 3;
const STREAM_COMMUTE: u64 = 4;
const STREAM_MOTION: u64 = 5;
const STREAM_SCREEN: u64 = 6;
const STREAM_RINGER: u64 = 7;

/// Context for absolute simulation `minute` (day 0 is a Sunday).
///
/// The elapsed-since-notification field is set to its saturation value;
/// the scheduling engine owns that bookkeeping.
pub fn step_context(profile: &SimProfile, seed: u64, minute: u64) -> UserContext {
    let r = &profile.routine;
    let day = minute / u64::from(MINUTES_PER_DAY);
    let tod = (minute % u64::from(MINUTES_PER_DAY)) as u32;
    let dow = (day % 7) as u8;
    let weekday = (1..=5).contains(&dow);

    let commuting = weekday
        && ((tod + r.commute_minutes >= r.work_start && tod < r.work_start)
            || (tod >= r.work_end && tod < r.work_end + r.commute_minutes));
    let location = if commuting {
        Location::Others
    } else if weekday && tod >= r.work_start && tod < r.work_end {
        let lunch = (12 * 60..13 * 60).contains(&tod) && unit(seed, STREAM_LUNCH, day) < r.lunch_out_probability;
        if lunch {
            Location::Others
        } else {
            Location::Work
        }
    } else if weekday && (18 * 60..21 * 60).contains(&tod) {
        let block = day * 48 + u64::from(tod / 30);
        if unit(seed, STREAM_EVENING, block) < r.evening_out_probability {
            Location::Others
        } else {
            Location::Home
        }
    } else if !weekday && (11 * 60..18 * 60).contains(&tod) {
        let block = day * 24 + u64::from(tod / 60);
        if unit(seed, STREAM_WEEKEND, block) < r.weekend_out_probability {
            Location::Others
        } else {
            Location::Home
        }
    } else {
        Location::Home
    };

    let motion_block = day * 144 + u64::from(tod / 10);
    let u = unit(seed, STREAM_MOTION, motion_block);
    let motion = if commuting {
        match unit(seed, STREAM_COMMUTE, day) {
            x if x < 0.6 => Motion::Driving,
            x if x < 0.8 => Motion::Biking,
            _ => Motion::Walking,
        }
    } else if location == Location::Others {
        match u {
            x if x < 0.5 => Motion::Stationary,
            x if x < 0.85 => Motion::Walking,
            x if x < 0.95 => Motion::Running,
            _ => Motion::Driving,
        }
    } else if u < 0.9 {
        Motion::Stationary
    } else {
        Motion::Walking
    };

    let block = u64::from(r.screen_block.max(1));
    let screen_key = minute / block;
    let awake = (8 * 60..23 * 60).contains(&tod);
    let p_on = if motion == Motion::Driving {
        0.05
    } else if awake {
        r.day_screen_on
    } else {
        r.night_screen_on
    };
    let screen = if unit(seed, STREAM_SCREEN, screen_key) < p_on {
        Screen::On
    } else {
        Screen::Off
    };

    let u = unit(seed, STREAM_RINGER, day * 12 + u64::from(tod / 120));
    let ringer = if tod < 7 * 60 {
        if u < 0.7 {
            Ringer::Silent
        } else {
            Ringer::Vibration
        }
    } else if location == Location::Work {
        match u {
            x if x < 0.2 => Ringer::Silent,
            x if x < 0.8 => Ringer::Vibration,
            _ => Ringer::Normal,
        }
    } else {
        match u {
            x if x < 0.15 => Ringer::Silent,
            x if x < 0.45 => Ringer::Vibration,
            _ => Ringer::Normal,
        }
    };

    UserContext {
        time_of_day: tod,
        day_of_week: dow,
        location,
        motion,
        ringer,
        screen,
        elapsed_since_last_notification: ELAPSED_CAP_MINUTES,
    }
}

/// What the simulated user does with a notification, and when.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimResponse {
    pub outcome: Outcome,
    /// Minutes after the send at which the reaction happens (`None` for ignores).
    pub delay_minutes: Option<u32>,
}

/// One simulated participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSimulator {
    base: SimProfile,
    current: SimProfile,
    current_day: Option<u64>,
    seed: u64,
    rng: ChaCha8Rng,
}

impl UserSimulator {
    pub fn new(profile: SimProfile, seed: u64) -> Result<Self, ProfileError> {
        profile.validate()?;
        Ok(UserSimulator {
            current: profile.clone(),
            base: profile,
            current_day: None,
            seed,
            rng: ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x5EED)),
        })
    }

    pub fn profile(&self) -> &SimProfile {
        &self.current
    }

    fn sync_day(&mut self, minute: u64) {
        let day = minute / u64::from(MINUTES_PER_DAY);
        if self.current_day != Some(day) {
            self.current = apply_schedule(&self.base, day);
            self.current_day = Some(day);
        }
    }

    pub fn context(&mut self, minute: u64) -> UserContext {
        self.sync_day(minute);
        step_context(&self.current, self.seed, minute)
    }

    /// Reaction to a notification carrying `task`, sent at `minute` in `ctx`.
    pub fn respond(&mut self, ctx: &UserContext, task: &Microtask, minute: u64) -> SimResponse {
        self.sync_day(minute);
        let (p_answer, p_dismiss) = self.current.availability(ctx);
        let u: f64 = self.rng.gen();
        if u < p_answer {
            let t = self.current.response_time.sample(&mut self.rng);
            if f64::from(t) > NOTIFICATION_TIMEOUT_MINUTES {
                return SimResponse {
                    outcome: Outcome::Ignored,
                    delay_minutes: None,
                };
            }
            let answer = self.choose_answer(task);
            SimResponse {
                outcome: Outcome::Answered {
                    response_time_minutes: f64::from(t),
                    answer: Some(answer),
                },
                delay_minutes: Some(t),
            }
        } else if u < p_answer + p_dismiss {
            SimResponse {
                outcome: Outcome::Dismissed,
                delay_minutes: Some(0),
            }
        } else {
            SimResponse {
                outcome: Outcome::Ignored,
                delay_minutes: None,
            }
        }
    }

    fn choose_answer(&mut self, task: &Microtask) -> usize {
        let n = task.options.len();
        match task.gold_answer {
            Some(gold) if task.is_factual() => {
                if n == 1 || self.rng.gen::<f64>() < self.current.accuracy {
                    gold
                } else {
                    let k = self.rng.gen_range(0..n - 1);
                    if k >= gold {
                        k + 1
                    } else {
                        k
                    }
                }
            }
            _ => self.rng.gen_range(0..n),
        }
    }
}
