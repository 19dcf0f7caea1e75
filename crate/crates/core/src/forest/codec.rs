//! Binary forest format.
//!
//! ```text
//! magic        b"NRFM"
//! version      u32
//! n_estimators u32
//! max_features u8   (0 auto, 1 sqrt, 2 log2)
//! seed         u64
//! n_trees      u32
//! per tree:    u32 node count, then per node:
//!   0u8, u32 negative, u32 positive                      (leaf)
//!   1u8, u32 feature, f64 threshold, u32 left, u32 right (split)
//! ```
//!
//! Little-endian throughout.

use super::{DecisionTree, ForestError, ForestModel, MaxFeatures, Node};
use crate::features::OBS_DIM;

const MAGIC: &[u8; 4] = b"NRFM";
const VERSION: u32 = 1;

pub fn save_forest(model: &ForestModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(model.n_estimators as u32).to_le_bytes());
    out.push(model.max_features.code());
    out.extend_from_slice(&model.seed.to_le_bytes());
    out.extend_from_slice(&(model.trees.len() as u32).to_le_bytes());
    for tree in &model.trees {
        out.extend_from_slice(&(tree.nodes.len() as u32).to_le_bytes());
        for node in &tree.nodes {
            match *node {
                Node::Leaf { negative, positive } => {
                    out.push(0);
                    out.extend_from_slice(&negative.to_le_bytes());
                    out.extend_from_slice(&positive.to_le_bytes());
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    out.push(1);
                    out.extend_from_slice(&(feature as u32).to_le_bytes());
                    out.extend_from_slice(&threshold.to_le_bytes());
                    out.extend_from_slice(&(left as u32).to_le_bytes());
                    out.extend_from_slice(&(right as u32).to_le_bytes());
                }
            }
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], ForestError> {
        if self.buf.len() - self.pos < N {
            return Err(ForestError::Format("truncated payload".into()));
        }
        let out = self.buf[self.pos..self.pos + N].try_into().unwrap();
        self.pos += N;
        Ok(out)
    }
    fn u32(&mut self) -> Result<u32, ForestError> {
        self.take::<4>().map(u32::from_le_bytes)
    }
}

pub fn load_forest(bytes: &[u8]) -> Result<ForestModel, ForestError> {
    let bad = |m: &str| ForestError::Format(m.to_string());
    let mut r = Reader { buf: bytes, pos: 0 };
    if &r.take::<4>()? != MAGIC {
        return Err(bad("not a forest blob"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(ForestError::Format(format!("unsupported format version {version}")));
    }
    let n_estimators = r.u32()? as usize;
    let max_features = MaxFeatures::from_code(r.take::<1>()?[0]).ok_or_else(|| bad("unknown max_features code"))?;
    let seed = u64::from_le_bytes(r.take::<8>()?);
    let n_trees = r.u32()? as usize;
    let mut trees = Vec::new();
    for _ in 0..n_trees {
        let n_nodes = r.u32()? as usize;
        if n_nodes == 0 {
            return Err(bad("empty tree"));
        }
        let mut nodes = Vec::new();
        for _ in 0..n_nodes {
            let node = match r.take::<1>()?[0] {
                0 => {
                    let negative = r.u32()?;
                    let positive = r.u32()?;
                    if negative + positive == 0 {
                        return Err(bad("leaf without samples"));
                    }
                    Node::Leaf { negative, positive }
                }
                1 => {
                    let feature = r.u32()? as usize;
                    let threshold = f64::from_le_bytes(r.take::<8>()?);
                    let left = r.u32()? as usize;
                    let right = r.u32()? as usize;
                    if feature >= OBS_DIM || left >= n_nodes || right >= n_nodes || left == 0 || right == 0 {
                        return Err(bad("split node out of range"));
                    }
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    }
                }
                _ => return Err(bad("unknown node tag")),
            };
            nodes.push(node);
        }
        trees.push(DecisionTree { nodes });
    }
    if r.pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    if trees.is_empty() {
        return Err(ForestError::Untrained);
    }
    Ok(ForestModel {
        trees,
        n_estimators,
        max_features,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::super::tests::synthetic;
    use super::super::train_forest;
    use super::*;
    use crate::features::Screen;
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_blobs() {
        assert!(load_forest(b"junk").is_err());
        let data = synthetic(60, 1, |c| c.screen == Screen::On);
        let bytes = save_forest(&train_forest(&data, 3, MaxFeatures::Log2, 2).unwrap());
        assert!(load_forest(&bytes[..bytes.len() - 3]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn round_trip(seed in any::<u64>(), n in 1usize..6) {
            let data = synthetic(80, seed, |c| c.screen == Screen::On && c.time_of_day < 900);
            let model = train_forest(&data, n, MaxFeatures::Sqrt, seed).unwrap();
            let bytes = save_forest(&model);
            let back = load_forest(&bytes).unwrap();
            prop_assert_eq!(save_forest(&back), bytes);
            prop_assert_eq!(back, model);
        }
    }
}
