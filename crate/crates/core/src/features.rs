//! Sensed user context and its fixed-length numeric encoding.
//!
//! Both agents consume the same 16-dimensional [`Observation`]:
//!
//! | index  | feature                                                |
//! |--------|--------------------------------------------------------|
//! | 0      | time of day, minutes / 1440                            |
//! | 1      | day of week, 0 (Sunday) .. 6 (Saturday), scaled by / 6 |
//! | 2..5   | location one-hot (Home, Work, Others)                  |
//! | 5..10  | motion one-hot (Stationary, Walking, Running, Biking, Driving) |
//! | 10..13 | ringer one-hot (Silent, Vibration, Normal)             |
//! | 13..15 | screen one-hot (On, Off)                               |
//! | 15     | minutes since last notification, clipped to 120, / 120 |

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const OBS_DIM: usize = 16;
pub const MINUTES_PER_DAY: u32 = 1440;
pub const ELAPSED_CAP_MINUTES: f64 = 120.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContextError {
    #[error("time_of_day must be in 0..=1439, got {0}")]
    TimeOfDay(u32),
    #[error("day_of_week must be in 0..=6, got {0}")]
    DayOfWeek(u8),
    #[error("elapsed_since_last_notification must be finite and non-negative, got {0}")]
    Elapsed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Location {
    Home,
    Work,
    Others,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Motion {
    Stationary,
    Walking,
    Running,
    Biking,
    Driving,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Ringer {
    Silent,
    Vibration,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Screen {
    On,
    Off,
}

impl Location {
    pub const ALL: [Location; 3] = [Location::Home, Location::Work, Location::Others];
}

impl Motion {
    pub const ALL: [Motion; 5] = [
        Motion::Stationary,
        Motion::Walking,
        Motion::Running,
        Motion::Biking,
        Motion::Driving,
    ];
}

impl Ringer {
    pub const ALL: [Ringer; 3] = [Ringer::Silent, Ringer::Vibration, Ringer::Normal];
}

impl Screen {
    pub const ALL: [Screen; 2] = [Screen::On, Screen::Off];
}

/// One minute-resolution snapshot of the sensed modalities.
///
/// Deserialization validates the ranges, so a `UserContext` obtained from the
/// wire is always encodable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawContext")]
pub struct UserContext {
    pub time_of_day: u32,
    pub day_of_week: u8,
    pub location: Location,
    pub motion: Motion,
    pub ringer: Ringer,
    pub screen: Screen,
    pub elapsed_since_last_notification: f64,
}

#[derive(Deserialize)]
struct RawContext {
    time_of_day: u32,
    day_of_week: u8,
    location: Location,
    motion: Motion,
    ringer: Ringer,
    screen: Screen,
    elapsed_since_last_notification: f64,
}

impl TryFrom<RawContext> for UserContext {
    type Error = ContextError;

    fn try_from(raw: RawContext) -> Result<Self, Self::Error> {
        UserContext::new(
            raw.time_of_day,
            raw.day_of_week,
            raw.location,
            raw.motion,
            raw.ringer,
            raw.screen,
            raw.elapsed_since_last_notification,
        )
    }
}

impl UserContext {
    pub fn new(
        time_of_day: u32,
        day_of_week: u8,
        location: Location,
        motion: Motion,
        ringer: Ringer,
        screen: Screen,
        elapsed_since_last_notification: f64,
    ) -> Result<Self, ContextError> {
        let ctx = UserContext {
            time_of_day,
            day_of_week,
            location,
            motion,
            ringer,
            screen,
            elapsed_since_last_notification,
        };
        ctx.validate()?;
        Ok(ctx)
    }

    pub fn validate(&self) -> Result<(), ContextError> {
        if self.time_of_day >= MINUTES_PER_DAY {
            return Err(ContextError::TimeOfDay(self.time_of_day));
        }
        if self.day_of_week > 6 {
            return Err(ContextError::DayOfWeek(self.day_of_week));
        }
        let e = self.elapsed_since_last_notification;
        if !e.is_finite() || e < 0.0 {
            return Err(ContextError::Elapsed(e));
        }
        Ok(())
    }

    pub fn is_weekend(&self) -> bool {
        self.day_of_week == 0 || self.day_of_week == 6
    }
}

/// Fixed-length feature vector fed to both learners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation(pub [f64; OBS_DIM]);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl Default for Observation {
    fn default() -> Self {
        Observation([0.0; OBS_DIM])
    }
}

const LOCATION_OFFSET: usize = 2;
const MOTION_OFFSET: usize = 5;
const RINGER_OFFSET: usize = 10;
const SCREEN_OFFSET: usize = 13;
const ELAPSED_INDEX: usize = 15;

pub fn encode(ctx: &UserContext) -> Observation {
    let mut v = [0.0; OBS_DIM];
    v[0] = f64::from(ctx.time_of_day) / f64::from(MINUTES_PER_DAY);
    v[1] = f64::from(ctx.day_of_week) / 6.0;
    v[LOCATION_OFFSET + ctx.location as usize] = 1.0;
    v[MOTION_OFFSET + ctx.motion as usize] = 1.0;
    v[RINGER_OFFSET + ctx.ringer as usize] = 1.0;
    v[SCREEN_OFFSET + ctx.screen as usize] = 1.0;
    v[ELAPSED_INDEX] =
        ctx.elapsed_since_last_notification.clamp(0.0, ELAPSED_CAP_MINUTES) / ELAPSED_CAP_MINUTES;
    Observation(v)
}

const LABELS: [&str; OBS_DIM] = [
    "time_of_day",
    "day_of_week",
    "location_home",
    "location_work",
    "location_others",
    "motion_stationary",
    "motion_walking",
    "motion_running",
    "motion_biking",
    "motion_driving",
    "ringer_silent",
    "ringer_vibration",
    "ringer_normal",
    "screen_on",
    "screen_off",
    "elapsed_since_last_notification",
];

/// Feature names in encoding order.
pub fn decode_labels() -> &'static [&'static str; OBS_DIM] {
    &LABELS
}

/// Index of the screen-on indicator, used by diagnostics that split confidence by screen state.
pub const SCREEN_ON_INDEX: usize = SCREEN_OFFSET;

/// Ranges of the four one-hot groups.
pub const ONE_HOT_GROUPS: [std::ops::Range<usize>; 4] = [
    LOCATION_OFFSET..MOTION_OFFSET,
    MOTION_OFFSET..RINGER_OFFSET,
    RINGER_OFFSET..SCREEN_OFFSET,
    SCREEN_OFFSET..ELAPSED_INDEX,
];
