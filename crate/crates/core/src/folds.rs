//! Stratified fold assignment at essay level.
//!
//! Folds are assigned per essay, so every chunk of an essay lands in the same
//! fold. Essays are shuffled with the seed and dealt round-robin within each
//! class, continuing the deal across classes so fold sizes differ by at most one.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Allowed deviation, in essays, of a fold's positive count from its share of
/// the global positive rate.
pub const STRATIFICATION_SLACK: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// Fold of each essay, parallel to the labels the plan was built from.
    pub folds: Vec<usize>,
    /// Set for leave-one-out plans, where stratification is meaningless.
    pub stratification_waived: bool,
}

pub fn make_folds(labels: &[bool], k: usize, seed: u64) -> Result<FoldPlan> {
    let n = labels.len();
    if k < 2 || k > n {
        return Err(Error::InvalidFoldCount { k, n });
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == n {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut folds = alloc::vec![0; n];
    let mut deal = 0usize;
    for class in [true, false] {
        for &i in order.iter().filter(|&&i| labels[i] == class) {
            folds[i] = deal % k;
            deal += 1;
        }
    }
    Ok(FoldPlan { k, seed, folds, stratification_waived: k == n })
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] != fold).collect()
    }

    /// True when every fold's positive count is within the allowed slack of
    /// its share of the global rate (always true when waived).
    pub fn is_stratified(&self, labels: &[bool]) -> bool {
        if self.stratification_waived {
            return true;
        }
        let rate = labels.iter().filter(|&&l| l).count() as f64 / labels.len() as f64;
        (0..self.k).all(|f| {
            let idx = self.test_indices(f);
            let pos = idx.iter().filter(|&&i| labels[i]).count() as f64;
            (pos - rate * idx.len() as f64).abs() <= STRATIFICATION_SLACK
        })
    }
}
