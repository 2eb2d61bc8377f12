use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Slice boundaries over a shuffled list of 994 records; smaller sets scale
/// them proportionally.
const REFERENCE_RECORDS: usize = 994;
const TEST_END: usize = 100;
const VALIDATION: [(usize, usize); 4] = [(100, 200), (300, 400), (600, 700), (894, 994)];
pub const MIN_RECORDS: usize = 10;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub fold: usize,
    pub training: Vec<usize>,
    pub validation: Vec<usize>,
    pub testing: Vec<usize>,
}

fn scaled(boundary: usize, n: usize) -> usize {
    (boundary * n + REFERENCE_RECORDS / 2) / REFERENCE_RECORDS
}

/// Four folds over a seeded shuffle of `0..n`: the first slice is the shared
/// test set, each fold validates on its own slice and trains on the rest.
pub fn make_folds(n: usize, seed: u64) -> Result<Vec<FoldPlan>> {
    if n < MIN_RECORDS {
        return Err(invalid(format!("{n} records cannot form folds; at least {MIN_RECORDS} are needed")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test_end = scaled(TEST_END, n);
    let testing = order[..test_end].to_vec();
    VALIDATION
        .iter()
        .enumerate()
        .map(|(k, &(a, b))| {
            let (a, b) = (scaled(a, n), scaled(b, n));
            let validation = order[a..b].to_vec();
            let training: Vec<usize> = order[test_end..a].iter().chain(&order[b..]).copied().collect();
            if testing.is_empty() || validation.is_empty() || training.is_empty() {
                return Err(invalid(format!("{n} records leave fold {} with an empty split", k + 1)));
            }
            Ok(FoldPlan {
                fold: k + 1,
                training,
                validation,
                testing: testing.clone(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_scale_sizes() {
        let folds = make_folds(994, 0).unwrap();
        for f in &folds {
            assert_eq!((f.training.len(), f.validation.len(), f.testing.len()), (794, 100, 100));
        }
    }

    #[test]
    fn desk_scale_sizes() {
        let f = &make_folds(20, 3).unwrap()[0];
        assert_eq!((f.training.len(), f.validation.len(), f.testing.len()), (16, 2, 2));
    }

    #[test]
    fn too_few_records() {
        assert!(make_folds(9, 0).is_err());
        assert!(make_folds(10, 0).is_ok());
    }
}
