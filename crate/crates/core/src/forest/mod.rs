//! Random forest baseline: bagged Gini trees voting on send/silent, plus the
//! random schedule that collects its training labels.

mod codec;
mod grid;
mod tree;

pub use codec::{load_forest, save_forest};
pub use grid::{grid_search, holdout_split, score_direct_method, GridCell, GridSearchResult, ESTIMATOR_GRID, MODE_GRID};
pub use tree::{train_tree, DecisionTree, Node};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::a2c::Action;
use crate::features::Observation;

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("no training data")]
    EmptyData,
    #[error("model has no trees")]
    Untrained,
    #[error("forest blob: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Positive,
    Negative,
}

/// A logged Send and what came of it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub features: Observation,
    /// Positive iff the notification was answered.
    pub label: Label,
    /// Reward the logged Send actually earned.
    pub reward: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    /// Same as `Sqrt`.
    Auto,
    Sqrt,
    Log2,
}

impl MaxFeatures {
    pub fn count(self, n_features: usize) -> usize {
        let k = match self {
            MaxFeatures::Auto | MaxFeatures::Sqrt => (n_features as f64).sqrt().ceil() as usize,
            MaxFeatures::Log2 => (n_features as f64).log2().floor() as usize,
        };
        k.clamp(1, n_features)
    }

    pub fn code(self) -> u8 {
        match self {
            MaxFeatures::Auto => 0,
            MaxFeatures::Sqrt => 1,
            MaxFeatures::Log2 => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(MaxFeatures::Auto),
            1 => Some(MaxFeatures::Sqrt),
            2 => Some(MaxFeatures::Log2),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<DecisionTree>,
    pub n_estimators: usize,
    pub max_features: MaxFeatures,
    pub seed: u64,
}

/// Trains `n_estimators` trees, each on its own bootstrap resample of `data`.
pub fn train_forest(
    data: &[LabeledExample],
    n_estimators: usize,
    max_features: MaxFeatures,
    seed: u64,
) -> Result<ForestModel, ForestError> {
    if data.is_empty() {
        return Err(ForestError::EmptyData);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trees = (0..n_estimators.max(1))
        .map(|_| {
            let sample: Vec<LabeledExample> = (0..data.len()).map(|_| data[rng.gen_range(0..data.len())]).collect();
            train_tree(&sample, max_features, &mut rng)
        })
        .collect();
    Ok(ForestModel {
        trees,
        n_estimators: n_estimators.max(1),
        max_features,
        seed,
    })
}

impl ForestModel {
    /// A one-tree model that always votes for `label`.
    pub fn constant(label: Label, seed: u64) -> Self {
        let tree = match label {
            Label::Positive => DecisionTree::leaf(0, 1),
            Label::Negative => DecisionTree::leaf(1, 0),
        };
        ForestModel {
            trees: vec![tree],
            n_estimators: 1,
            max_features: MaxFeatures::Auto,
            seed,
        }
    }

    pub fn positive_votes(&self, obs: &Observation) -> usize {
        self.trees.iter().filter(|t| t.predict(obs) == Label::Positive).count()
    }
}

/// Votes of the ensemble: confidence is the fraction of trees voting Positive;
/// the forest sends only on a strict majority.
pub fn predict(model: &ForestModel, obs: &Observation) -> Result<(Action, f64), ForestError> {
    if model.trees.is_empty() {
        return Err(ForestError::Untrained);
    }
    let confidence = model.positive_votes(obs) as f64 / model.trees.len() as f64;
    let action = if confidence > 0.5 { Action::Send } else { Action::Silent };
    Ok((action, confidence))
}

/// The label-collection schedule: a coin flip every `tau` minutes inside the active window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomSchedule {
    pub tau_minutes: u32,
    pub send_probability: f64,
    pub window_start: u32,
    pub window_end: u32,
}

impl Default for RandomSchedule {
    fn default() -> Self {
        RandomSchedule {
            tau_minutes: 30,
            send_probability: 0.5,
            window_start: 600,
            window_end: 1320,
        }
    }
}

impl RandomSchedule {
    pub fn is_candidate(&self, minute: u64) -> bool {
        let tod = (minute % 1440) as u32;
        minute % u64::from(self.tau_minutes) == 0 && tod >= self.window_start && tod < self.window_end
    }

    /// Returns the action and the probability it had of being Send.
    pub fn decide(&self, minute: u64, rng: &mut impl Rng) -> (Action, f64) {
        if !self.is_candidate(minute) {
            return (Action::Silent, 0.0);
        }
        let send = rng.gen::<f64>() < self.send_probability;
        (if send { Action::Send } else { Action::Silent }, self.send_probability)
    }
}

pub fn random_training_policy(minute: u64, tau_minutes: u32, rng: &mut impl Rng) -> Action {
    RandomSchedule {
        tau_minutes,
        ..Default::default()
    }
    .decide(minute, rng)
    .0
}
