use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng;

pub const DEFAULT_FOLDS: usize = 11;

/// Assignment of items to cross-validation folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub n_items: usize,
    pub n_folds: usize,
    pub assignment: Vec<usize>,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.n_items).filter(|&i| self.assignment[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.n_items).filter(|&i| self.assignment[i] != fold).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }

    /// Plan over a permuted item order: item `perm[i]` of the new order takes
    /// the fold of item `i`.
    pub fn permuted(&self, perm: &[usize]) -> FoldPlan {
        let mut assignment = vec![0; self.n_items];
        for (i, &p) in perm.iter().enumerate() {
            assignment[p] = self.assignment[i];
        }
        FoldPlan {
            n_items: self.n_items,
            n_folds: self.n_folds,
            assignment,
        }
    }
}

/// Seeded shuffle of the items, then round-robin assignment to folds, so fold
/// sizes differ by at most one.
pub fn make_folds(item_count: usize, n_folds: usize, seed: u64) -> Result<FoldPlan> {
    if n_folds < 2 || n_folds > item_count {
        return Err(Error::InvalidArgument(format!(
            "need 2 <= n_folds <= item_count, got {n_folds} folds for {item_count} items"
        )));
    }
    let mut order: Vec<usize> = (0..item_count).collect();
    order.shuffle(&mut rng(seed));
    let mut assignment = vec![0; item_count];
    for (position, &item) in order.iter().enumerate() {
        assignment[item] = position % n_folds;
    }
    Ok(FoldPlan {
        n_items: item_count,
        n_folds,
        assignment,
    })
}
