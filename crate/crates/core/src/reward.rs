//! Notification outcomes and the scalar reward they earn.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Notifications expire this many minutes after they are sent.
pub const NOTIFICATION_TIMEOUT_MINUTES: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Answered {
        response_time_minutes: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        answer: Option<usize>,
    },
    Dismissed,
    Ignored,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RewardError {
    #[error("response time must be within [0, 60] minutes, got {0}")]
    ResponseTime(f64),
    #[error("decay_base must be in (0, 1], got {0}")]
    DecayBase(f64),
    #[error("penalties must satisfy dismiss < ignore <= 0, got dismiss={dismiss}, ignore={ignore}")]
    Penalties { dismiss: f64, ignore: f64 },
}

impl Outcome {
    pub fn answered(response_time_minutes: f64) -> Self {
        Outcome::Answered {
            response_time_minutes,
            answer: None,
        }
    }

    pub fn validate(&self) -> Result<(), RewardError> {
        if let Outcome::Answered {
            response_time_minutes: t,
            ..
        } = *self
        {
            if !(0.0..=NOTIFICATION_TIMEOUT_MINUTES).contains(&t) {
                return Err(RewardError::ResponseTime(t));
            }
        }
        Ok(())
    }

    pub fn is_answered(&self) -> bool {
        matches!(self, Outcome::Answered { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Answered { .. } => "answered",
            Outcome::Dismissed => "dismissed",
            Outcome::Ignored => "ignored",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub decay_base: f64,
    pub dismiss_penalty: f64,
    pub ignore_penalty: f64,
    pub silent_reward: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            decay_base: 0.9,
            dismiss_penalty: -5.0,
            ignore_penalty: -0.1,
            silent_reward: 0.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), RewardError> {
        if !(self.decay_base > 0.0 && self.decay_base <= 1.0) {
            return Err(RewardError::DecayBase(self.decay_base));
        }
        if !(self.dismiss_penalty < self.ignore_penalty && self.ignore_penalty <= 0.0) {
            return Err(RewardError::Penalties {
                dismiss: self.dismiss_penalty,
                ignore: self.ignore_penalty,
            });
        }
        Ok(())
    }
}

/// Answered notifications earn `decay_base^t` for a response after `t` minutes.
pub fn reward(outcome: &Outcome, cfg: &RewardConfig) -> f64 {
    match *outcome {
        Outcome::Answered {
            response_time_minutes,
            ..
        } => cfg.decay_base.powf(response_time_minutes),
        Outcome::Dismissed => cfg.dismiss_penalty,
        Outcome::Ignored => cfg.ignore_penalty,
    }
}

pub fn reward_for_silent(cfg: &RewardConfig) -> f64 {
    cfg.silent_reward
}
