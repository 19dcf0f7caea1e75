use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Label, LabeledExample, MaxFeatures};
use crate::features::{Observation, OBS_DIM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        /// Taken when `x[feature] <= threshold`.
        left: usize,
        right: usize,
    },
    Leaf {
        negative: u32,
        positive: u32,
    },
}

/// A binary classification tree stored as a flat node array rooted at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn leaf(negative: u32, positive: u32) -> Self {
        DecisionTree {
            nodes: vec![Node::Leaf { negative, positive }],
        }
    }

    fn leaf_for(&self, obs: &Observation) -> (u32, u32) {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if obs.0[feature] <= threshold { left } else { right },
                Node::Leaf { negative, positive } => return (negative, positive),
            }
        }
    }

    /// Majority class of the reached leaf; an evenly split leaf votes Negative.
    pub fn predict(&self, obs: &Observation) -> Label {
        let (neg, pos) = self.leaf_for(obs);
        if pos > neg {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    /// Fraction of Positive training samples in the reached leaf.
    pub fn positive_fraction(&self, obs: &Observation) -> f64 {
        let (neg, pos) = self.leaf_for(obs);
        f64::from(pos) / f64::from(pos + neg)
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }
}

fn gini(neg: f64, pos: f64) -> f64 {
    let n = neg + pos;
    if n == 0.0 {
        return 0.0;
    }
    let (a, b) = (neg / n, pos / n);
    1.0 - a * a - b * b
}

struct Split {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

fn best_split_on(data: &[LabeledExample], idx: &[usize], feature: usize) -> Option<Split> {
    let mut sorted: Vec<(f64, bool)> = idx
        .iter()
        .map(|&i| (data[i].features.0[feature], data[i].label == Label::Positive))
        .collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total_pos = sorted.iter().filter(|s| s.1).count() as f64;
    let n = sorted.len() as f64;
    let mut left_pos = 0.0;
    let mut best: Option<Split> = None;
    for k in 0..sorted.len() - 1 {
        if sorted[k].1 {
            left_pos += 1.0;
        }
        if sorted[k].0 == sorted[k + 1].0 {
            continue;
        }
        let n_left = (k + 1) as f64;
        let n_right = n - n_left;
        let right_pos = total_pos - left_pos;
        let impurity = (n_left * gini(n_left - left_pos, left_pos)
            + n_right * gini(n_right - right_pos, right_pos))
            / n;
        if best.as_ref().is_none_or(|b| impurity < b.impurity) {
            let mid = 0.5 * (sorted[k].0 + sorted[k + 1].0);
            // The midpoint of adjacent floats can round up to the right value.
            let threshold = if mid < sorted[k + 1].0 { mid } else { sorted[k].0 };
            best = Some(Split {
                feature,
                threshold,
                impurity,
            });
        }
    }
    best
}

/// Grows a CART tree on `data` exactly as given (no resampling).
///
/// Each node examines a random subset of `max_features.count()` features;
/// when none of them can separate the node's samples the remaining features
/// are tried in random order. Nodes become leaves when pure, when they hold
/// fewer than two samples, or when every feature is constant.
pub fn train_tree(data: &[LabeledExample], max_features: MaxFeatures, rng: &mut impl Rng) -> DecisionTree {
    assert!(!data.is_empty(), "train_tree requires data");
    let mut tree = DecisionTree { nodes: Vec::new() };
    let idx: Vec<usize> = (0..data.len()).collect();
    grow(data, idx, max_features.count(OBS_DIM), rng, &mut tree.nodes);
    tree
}

fn grow(data: &[LabeledExample], idx: Vec<usize>, k: usize, rng: &mut impl Rng, nodes: &mut Vec<Node>) -> usize {
    let pos = idx.iter().filter(|&&i| data[i].label == Label::Positive).count() as u32;
    let neg = idx.len() as u32 - pos;
    let id = nodes.len();
    nodes.push(Node::Leaf {
        negative: neg,
        positive: pos,
    });
    if pos == 0 || neg == 0 || idx.len() < 2 {
        return id;
    }
    let mut features: Vec<usize> = (0..OBS_DIM).collect();
    features.shuffle(rng);
    let mut best: Option<Split> = None;
    for (tried, &f) in features.iter().enumerate() {
        if tried >= k && best.is_some() {
            break;
        }
        if let Some(s) = best_split_on(data, &idx, f) {
            if best.as_ref().is_none_or(|b| s.impurity < b.impurity) {
                best = Some(s);
            }
        }
    }
    let Some(split) = best else {
        return id;
    };
    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idx
        .into_iter()
        .partition(|&i| data[i].features.0[split.feature] <= split.threshold);
    let left = grow(data, left_idx, k, rng, nodes);
    let right = grow(data, right_idx, k, rng, nodes);
    nodes[id] = Node::Split {
        feature: split.feature,
        threshold: split.threshold,
        left,
        right,
    };
    id
}
