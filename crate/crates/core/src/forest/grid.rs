use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{predict, train_forest, ForestError, ForestModel, Label, LabeledExample, MaxFeatures};
use crate::a2c::Action;

pub const ESTIMATOR_GRID: [usize; 6] = [1, 2, 4, 8, 16, 32];
pub const MODE_GRID: [MaxFeatures; 3] = [MaxFeatures::Auto, MaxFeatures::Sqrt, MaxFeatures::Log2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridCell {
    pub n_estimators: usize,
    pub max_features: MaxFeatures,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    pub model: ForestModel,
    pub chosen: GridCell,
    /// Held-out score of every cell in grid order; empty for the constant fallback.
    pub scores: Vec<(GridCell, f64)>,
    pub fallback: bool,
}

/// Direct-method estimate of a model's reward on logged Sends: each example the
/// model would send on contributes its realized reward; examples it would hold
/// back contribute zero.
pub fn score_direct_method(model: &ForestModel, held_out: &[LabeledExample]) -> Result<f64, ForestError> {
    let mut total = 0.0;
    for e in held_out {
        if predict(model, &e.features)?.0 == Action::Send {
            total += e.reward;
        }
    }
    Ok(total)
}

/// 80/20 split of `data` used by [`grid_search`], as (train, held-out).
pub fn holdout_split(data: &[LabeledExample], seed: u64) -> (Vec<LabeledExample>, Vec<LabeledExample>) {
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((data.len() as f64) * 0.2).round().max(1.0) as usize;
    let n_test = n_test.min(data.len().saturating_sub(1)).max(usize::from(data.len() == 1));
    let test = order[..n_test].iter().map(|&i| data[i]).collect();
    let train = order[n_test..].iter().map(|&i| data[i]).collect();
    (train, test)
}

/// Picks the (n_estimators, max_features) cell with the highest held-out
/// direct-method reward and refits it on all data. Ties go to fewer trees,
/// then to the earlier mode in [`MODE_GRID`].
pub fn grid_search(data: &[LabeledExample], seed: u64) -> Result<GridSearchResult, ForestError> {
    if data.is_empty() {
        return Err(ForestError::EmptyData);
    }
    let positives = data.iter().filter(|e| e.label == Label::Positive).count();
    if positives == 0 || positives == data.len() {
        let label = if positives == 0 { Label::Negative } else { Label::Positive };
        let model = ForestModel::constant(label, seed);
        return Ok(GridSearchResult {
            chosen: GridCell {
                n_estimators: model.n_estimators,
                max_features: model.max_features,
            },
            model,
            scores: Vec::new(),
            fallback: true,
        });
    }
    let (train, test) = holdout_split(data, seed);
    let train = if train.is_empty() { data.to_vec() } else { train };
    let mut scores = Vec::with_capacity(ESTIMATOR_GRID.len() * MODE_GRID.len());
    for &n_estimators in &ESTIMATOR_GRID {
        for &max_features in &MODE_GRID {
            let model = train_forest(&train, n_estimators, max_features, seed)?;
            let cell = GridCell {
                n_estimators,
                max_features,
            };
            scores.push((cell, score_direct_method(&model, &test)?));
        }
    }
    // Grid order already encodes the tie-break, so keep the first maximum.
    let mut best = scores[0];
    for &(cell, s) in &scores[1..] {
        if s > best.1 {
            best = (cell, s);
        }
    }
    let chosen = best.0;
    let model = train_forest(data, chosen.n_estimators, chosen.max_features, seed)?;
    Ok(GridSearchResult {
        model,
        chosen,
        scores,
        fallback: false,
    })
}
