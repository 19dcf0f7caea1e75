use serde::{Deserialize, Serialize};

use crate::features::{Observation, OBS_DIM};

const VARIANCE_FLOOR: f64 = 1e-8;
const CLIP: f64 = 5.0;

/// Per-dimension running mean and variance of observations.
///
/// Before any update the normalizer is the identity. Normalized values are
/// clipped to `[-5, 5]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningNormalizer {
    pub count: f64,
    pub mean: [f64; OBS_DIM],
    /// Sum of squared deviations from the mean.
    pub m2: [f64; OBS_DIM],
}

impl Default for RunningNormalizer {
    fn default() -> Self {
        RunningNormalizer {
            count: 0.0,
            mean: [0.0; OBS_DIM],
            m2: [0.0; OBS_DIM],
        }
    }
}

impl RunningNormalizer {
    pub fn variance(&self) -> [f64; OBS_DIM] {
        let mut var = [1.0; OBS_DIM];
        if self.count > 0.0 {
            for (v, m2) in var.iter_mut().zip(&self.m2) {
                *v = m2 / self.count;
            }
        }
        var
    }

    /// Merges a batch into the running statistics (parallel Welford update).
    pub fn update(&mut self, batch: &[Observation]) {
        if batch.is_empty() {
            return;
        }
        let n_b = batch.len() as f64;
        let mut mean_b = [0.0; OBS_DIM];
        for o in batch {
            for (m, x) in mean_b.iter_mut().zip(&o.0) {
                *m += x;
            }
        }
        for m in mean_b.iter_mut() {
            *m /= n_b;
        }
        let mut m2_b = [0.0; OBS_DIM];
        for o in batch {
            for i in 0..OBS_DIM {
                let d = o.0[i] - mean_b[i];
                m2_b[i] += d * d;
            }
        }
        let n_a = self.count;
        let n = n_a + n_b;
        for i in 0..OBS_DIM {
            let delta = mean_b[i] - self.mean[i];
            self.mean[i] += delta * n_b / n;
            self.m2[i] += m2_b[i] + delta * delta * n_a * n_b / n;
        }
        self.count = n;
    }

    pub fn normalize(&self, obs: &Observation) -> [f64; OBS_DIM] {
        if self.count == 0.0 {
            return obs.0;
        }
        let var = self.variance();
        let mut out = [0.0; OBS_DIM];
        for i in 0..OBS_DIM {
            out[i] = ((obs.0[i] - self.mean[i]) / var[i].max(VARIANCE_FLOOR).sqrt()).clamp(-CLIP, CLIP);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.count.is_finite()
            && self.count >= 0.0
            && self.mean.iter().chain(&self.m2).all(|v| v.is_finite())
            && self.m2.iter().all(|&v| v >= 0.0)
    }
}
