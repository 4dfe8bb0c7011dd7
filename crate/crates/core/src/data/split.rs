use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::GraspSample;
use crate::error::{contract_err, Result};

/// Image-wise train/test partition of sample ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
}

/// Shuffles source images with `seed` and fills the training side up to
/// `floor(n · ratio_train)` samples. Samples sharing a source always land on
/// the same side; a source group that would overshoot the target goes to test.
pub fn split_imagewise(samples: &[GraspSample], ratio_train: f64, seed: u64) -> Result<DatasetSplit> {
    if samples.len() < 2 {
        return Err(contract_err!("split needs at least 2 samples, got {}", samples.len()));
    }
    if !(ratio_train > 0.0 && ratio_train < 1.0) {
        return Err(contract_err!("train ratio must lie in (0, 1), got {ratio_train}"));
    }
    let mut groups: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for s in samples {
        groups.entry(s.source()).or_default().push(&s.id);
    }
    let mut order: Vec<Vec<&str>> = groups.into_values().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let target = (samples.len() as f64 * ratio_train).floor() as usize;
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for group in order {
        let side = if train.len() + group.len() <= target {
            &mut train
        } else {
            &mut test
        };
        side.extend(group.into_iter().map(String::from));
    }
    Ok(DatasetSplit { train, test, seed })
}
