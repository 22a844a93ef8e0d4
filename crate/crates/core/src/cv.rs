//! Stratified k-fold cross-validation shared by the tree and SVM searches.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::Label;
use crate::error::{Error, Result};

/// Validation folds. Each class is shuffled and dealt round-robin, so fold
/// class counts differ by at most one. Fold contents are sorted.
pub fn stratified_folds(labels: &[Label], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::config("k_folds", "must be at least 2"));
    }
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, l) in labels.iter().enumerate() {
        by_class[l.index()].push(i);
    }
    for (c, idx) in by_class.iter().enumerate() {
        if idx.len() < k {
            return Err(Error::input(format!(
                "class {c} has {} samples, {k}-fold stratification needs at least {k}",
                idx.len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut offset = 0;
    for idx in by_class.iter_mut() {
        idx.shuffle(&mut rng);
        for (j, &i) in idx.iter().enumerate() {
            folds[(j + offset) % k].push(i);
        }
        offset += idx.len();
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// (train, validation) index pairs for every fold.
pub fn fold_splits(n: usize, folds: &[Vec<usize>]) -> Vec<(Vec<usize>, Vec<usize>)> {
    folds
        .iter()
        .map(|val| {
            let mut in_val = vec![false; n];
            for &i in val {
                in_val[i] = true;
            }
            let train = (0..n).filter(|&i| !in_val[i]).collect();
            (train, val.clone())
        })
        .collect()
}

pub fn accuracy_of(pred: &[Label], truth: &[Label]) -> f64 {
    let ok = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    ok as f64 / truth.len().max(1) as f64
}
