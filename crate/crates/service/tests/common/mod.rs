#![allow(dead_code)]

use nudge_core::a2c::Action;
use nudge_core::simulator::{SimProfile, UserSimulator};
use nudge_core::study::derive_seed;
use nudge_service::{DecisionRequest, DecisionResponse, PreviousResponse, UserSettings};

/// A simulated phone: produces contexts and reports outcomes on the next
/// request, the way the study harness delivers them.
pub struct SimClient {
    pub user: String,
    sim: UserSimulator,
    due: Option<(u64, PreviousResponse)>,
}

impl SimClient {
    pub fn new(user: &str, profile: SimProfile, study_seed: u64) -> Self {
        SimClient {
            user: user.to_string(),
            sim: UserSimulator::new(profile, derive_seed(study_seed, user, 1)).unwrap(),
            due: None,
        }
    }

    pub fn request(&mut self, minute: u64) -> DecisionRequest {
        let previous = self.due.take_if(|(m, _)| *m <= minute).map(|(_, p)| p);
        DecisionRequest {
            user_id: self.user.clone(),
            context: self.sim.context(minute),
            previous_response: previous,
            minute: Some(minute),
        }
    }

    pub fn observe(&mut self, req: &DecisionRequest, resp: &DecisionResponse) {
        if resp.action != Action::Send {
            return;
        }
        let task = resp.microtask.as_ref().expect("send carries a microtask");
        let id = resp.notification_id.expect("send carries an id");
        let r = self.sim.respond(&req.context, task, resp.minute);
        self.due = r
            .delay_minutes
            .map(|t| (resp.minute + u64::from(t.max(1)), PreviousResponse::from_outcome(id, r.outcome)));
    }
}

pub fn window_minutes(days: u64) -> impl Iterator<Item = u64> {
    (0..days).flat_map(|d| (600..1320).map(move |t| d * 1440 + t))
}

pub fn small_settings(seed: u64) -> UserSettings {
    let mut s = UserSettings {
        seed,
        ..UserSettings::default()
    };
    s.hyperparameters.hidden_units = 16;
    s.hyperparameters.rollout_length = 64;
    s.hyperparameters.minibatch_size = 16;
    s
}
