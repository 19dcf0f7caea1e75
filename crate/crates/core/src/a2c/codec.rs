//! Binary policy format.
//!
//! ```text
//! magic      b"NA2C"
//! version    u32
//! hidden     u32
//! obs_dim    u32
//! step       u64
//! params     f64 x n          (n = ParamLayout::len)
//! normalizer f64 count, f64 x obs_dim mean, f64 x obs_dim m2
//! optimizer  u64 t, f64 x n first moments, f64 x n second moments
//! ```
//!
//! All integers and floats are little-endian.

use super::network::{ParamLayout, PolicyState};
use super::normalizer::RunningNormalizer;
use super::A2cError;
use crate::features::OBS_DIM;

const MAGIC: &[u8; 4] = b"NA2C";
pub const FORMAT_VERSION: u32 = 1;

pub fn save(state: &PolicyState) -> Vec<u8> {
    let n = state.params.len();
    let mut out = Vec::with_capacity(32 + 8 * (3 * n + 2 * OBS_DIM + 2));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(state.hidden as u32).to_le_bytes());
    out.extend_from_slice(&(OBS_DIM as u32).to_le_bytes());
    out.extend_from_slice(&state.step.to_le_bytes());
    let put = |out: &mut Vec<u8>, xs: &[f64]| {
        for x in xs {
            out.extend_from_slice(&x.to_le_bytes());
        }
    };
    put(&mut out, &state.params);
    put(&mut out, &[state.normalizer.count]);
    put(&mut out, &state.normalizer.mean);
    put(&mut out, &state.normalizer.m2);
    out.extend_from_slice(&state.adam_t.to_le_bytes());
    put(&mut out, &state.adam_m);
    put(&mut out, &state.adam_v);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], A2cError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| A2cError::Format("truncated payload".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32, A2cError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, A2cError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, A2cError> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| A2cError::Format("size overflow".into()))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn load(bytes: &[u8]) -> Result<PolicyState, A2cError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4).ok() != Some(MAGIC.as_slice()) {
        return Err(A2cError::Format("not a policy blob".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(A2cError::Format(format!("unsupported format version {version}")));
    }
    let hidden = r.u32()? as usize;
    let obs_dim = r.u32()? as usize;
    if obs_dim != OBS_DIM {
        return Err(A2cError::Format(format!("observation dimension {obs_dim}, expected {OBS_DIM}")));
    }
    if hidden == 0 || hidden > 1 << 20 {
        return Err(A2cError::Format(format!("implausible hidden size {hidden}")));
    }
    let step = r.u64()?;
    let n = ParamLayout::new(hidden).len();
    let params = r.f64s(n)?;
    let count = r.f64s(1)?[0];
    let mean: [f64; OBS_DIM] = r.f64s(OBS_DIM)?.try_into().unwrap();
    let m2: [f64; OBS_DIM] = r.f64s(OBS_DIM)?.try_into().unwrap();
    let adam_t = r.u64()?;
    let adam_m = r.f64s(n)?;
    let adam_v = r.f64s(n)?;
    if r.pos != bytes.len() {
        return Err(A2cError::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(PolicyState {
        hidden,
        params,
        adam_m,
        adam_v,
        adam_t,
        normalizer: RunningNormalizer { count, mean, m2 },
        step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::a2c::{train_step, Action, Hyperparameters, Rollout, Step};
    use crate::features::Observation;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trained_state(seed: u64, hidden: usize) -> PolicyState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = PolicyState::new(hidden, &mut rng);
        let steps = (0..70)
            .map(|i| Step {
                obs: Observation(std::array::from_fn(|_| rng.gen())),
                action: Action::from_index(i % 2),
                reward: rng.gen_range(-5.0..1.0),
                done: false,
            })
            .collect();
        let rollout = Rollout {
            steps,
            bootstrap_obs: Observation::default(),
        };
        let hp = Hyperparameters {
            hidden_units: hidden,
            sgd_iterations: 1,
            ..Default::default()
        };
        train_step(&mut state, &rollout, &hp, &mut rng).unwrap();
        state
    }

    #[test]
    fn garbage_and_truncation_are_rejected() {
        assert!(load(b"hello world").is_err());
        assert!(load(&[]).is_err());
        let bytes = save(&trained_state(1, 8));
        assert!(load(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong_version = bytes.clone();
        wrong_version[4] = 9;
        let err = load(&wrong_version).unwrap_err().to_string();
        assert!(err.contains("version"), "{err}");
        let mut extra = bytes;
        extra.push(0);
        assert!(load(&extra).is_err());
    }

    #[test]
    fn saving_is_canonical() {
        let s = trained_state(2, 16);
        assert_eq!(save(&s), save(&s.clone()));
        assert_eq!(&save(&s)[..4], b"NA2C");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn round_trip_is_bit_exact(seed in any::<u64>(), hidden in 1usize..40) {
            let s = trained_state(seed, hidden);
            let back = load(&save(&s)).unwrap();
            prop_assert_eq!(save(&back), save(&s));
            prop_assert_eq!(back, s);
        }
    }
}
