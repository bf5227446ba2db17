use rand::seq::SliceRandom;
use serde::Serialize;

use super::{DatasetError, DatasetIndex};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Fold {
    pub train: Vec<u64>,
    pub val: Vec<u64>,
}

/// Shuffles the sorted image ids with a seeded stream and cuts them into `k`
/// contiguous validation blocks whose sizes differ by at most one.
pub fn kfold_split(index: &DatasetIndex, k: usize, seed: u64) -> Result<Vec<Fold>, DatasetError> {
    let mut ids: Vec<u64> = index.images().iter().map(|i| i.image_id).collect();
    let n = ids.len();
    if k < 2 || k > n {
        return Err(DatasetError::BadFoldCount { k, n });
    }
    ids.sort_unstable();
    ids.shuffle(&mut rng::stream(seed, &[rng::tag::SPLIT]));

    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let mut val = ids[start..start + len].to_vec();
        let mut train: Vec<u64> = ids[..start].iter().chain(&ids[start + len..]).copied().collect();
        val.sort_unstable();
        train.sort_unstable();
        folds.push(Fold { train, val });
        start += len;
    }
    Ok(folds)
}
