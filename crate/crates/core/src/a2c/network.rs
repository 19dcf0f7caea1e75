use rand::Rng;
use serde::{Deserialize, Serialize};

use super::normalizer::RunningNormalizer;
use super::A2cError;
use crate::features::{Observation, OBS_DIM};

/// Offsets of each parameter block inside the flat parameter vector.
///
/// Blocks, in order: trunk weights (`hidden` rows of `OBS_DIM`), trunk bias,
/// policy-head weights (2 rows of `hidden`), policy-head bias, value-head
/// weights, value-head bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub hidden: usize,
}

impl ParamLayout {
    pub fn new(hidden: usize) -> Self {
        ParamLayout { hidden }
    }
    pub fn w1(&self) -> usize {
        0
    }
    pub fn b1(&self) -> usize {
        self.hidden * OBS_DIM
    }
    pub fn wp(&self) -> usize {
        self.b1() + self.hidden
    }
    pub fn bp(&self) -> usize {
        self.wp() + 2 * self.hidden
    }
    pub fn wv(&self) -> usize {
        self.bp() + 2
    }
    pub fn bv(&self) -> usize {
        self.wv() + self.hidden
    }
    pub fn len(&self) -> usize {
        self.bv() + 1
    }
    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub pre_activation: Vec<f64>,
    pub hidden: Vec<f64>,
    pub logits: [f64; 2],
    pub probs: [f64; 2],
    pub value: f64,
}

/// All learnable state of one user's agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyState {
    pub(crate) hidden: usize,
    pub(crate) params: Vec<f64>,
    /// Adam first-moment estimates, same layout as `params`.
    pub(crate) adam_m: Vec<f64>,
    /// Adam second-moment estimates.
    pub(crate) adam_v: Vec<f64>,
    pub(crate) adam_t: u64,
    pub normalizer: RunningNormalizer,
    /// Environment steps consumed by training so far.
    pub step: u64,
}

pub fn softmax2(logits: [f64; 2]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let z = e0 + e1;
    [e0 / z, e1 / z]
}

impl PolicyState {
    /// He-uniform trunk, small policy head, `1/sqrt(hidden)`-scaled value head, zero biases.
    pub fn new(hidden: usize, rng: &mut impl Rng) -> Self {
        let layout = ParamLayout::new(hidden);
        let mut params = vec![0.0; layout.len()];
        let trunk_bound = (6.0 / OBS_DIM as f64).sqrt();
        for w in &mut params[layout.w1()..layout.b1()] {
            *w = rng.gen_range(-trunk_bound..trunk_bound);
        }
        for w in &mut params[layout.wp()..layout.bp()] {
            *w = rng.gen_range(-0.01..0.01);
        }
        let value_bound = 1.0 / (hidden as f64).sqrt();
        for w in &mut params[layout.wv()..layout.bv()] {
            *w = rng.gen_range(-value_bound..value_bound);
        }
        PolicyState {
            hidden,
            adam_m: vec![0.0; params.len()],
            adam_v: vec![0.0; params.len()],
            params,
            adam_t: 0,
            normalizer: RunningNormalizer::default(),
            step: 0,
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(self.hidden)
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn optimizer_moments(&self) -> (&[f64], &[f64], u64) {
        (&self.adam_m, &self.adam_v, self.adam_t)
    }

    /// Sets both heads to zero so the policy is exactly uniform.
    pub fn zero_heads(&mut self) {
        let l = self.layout();
        for w in &mut self.params[l.wp()..] {
            *w = 0.0;
        }
    }

    pub fn check_finite(&self) -> Result<(), A2cError> {
        if !self.params.iter().all(|p| p.is_finite()) {
            return Err(A2cError::Corrupted("parameters"));
        }
        if !self.normalizer.is_finite() {
            return Err(A2cError::Corrupted("normalizer statistics"));
        }
        Ok(())
    }

    pub fn normalize(&self, obs: &Observation) -> [f64; OBS_DIM] {
        self.normalizer.normalize(obs)
    }

    /// Forward pass on an already-normalized input.
    pub fn forward_raw(&self, x: &[f64; OBS_DIM]) -> ForwardOutput {
        let l = self.layout();
        let p = &self.params;
        let mut pre = vec![0.0; self.hidden];
        let mut h = vec![0.0; self.hidden];
        for j in 0..self.hidden {
            let row = &p[l.w1() + j * OBS_DIM..l.w1() + (j + 1) * OBS_DIM];
            let z = p[l.b1() + j] + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
            pre[j] = z;
            h[j] = if z > 0.0 { z } else { 0.0 };
        }
        let mut logits = [p[l.bp()], p[l.bp() + 1]];
        for (k, logit) in logits.iter_mut().enumerate() {
            let row = &p[l.wp() + k * self.hidden..l.wp() + (k + 1) * self.hidden];
            *logit += row.iter().zip(&h).map(|(w, hj)| w * hj).sum::<f64>();
        }
        let value = p[l.bv()] + p[l.wv()..l.bv()].iter().zip(&h).map(|(w, hj)| w * hj).sum::<f64>();
        ForwardOutput {
            pre_activation: pre,
            hidden: h,
            logits,
            probs: softmax2(logits),
            value,
        }
    }

    pub fn value(&self, obs: &Observation) -> f64 {
        self.forward_raw(&self.normalize(obs)).value
    }
}
