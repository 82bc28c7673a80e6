use std::collections::BTreeSet;

use rand::seq::index;

use crate::error::{Error, Result};
use crate::seed;

/// Labelled set `L`, unlabelled set `U` and the batches committed per round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolState {
    size: usize,
    labeled: BTreeSet<usize>,
    unlabeled: BTreeSet<usize>,
    initial: Vec<usize>,
    history: Vec<Vec<usize>>,
}

/// `ceil(fraction * n)`, tolerant of round-off in the product.
pub fn initial_label_count(n: usize, fraction: f64) -> usize {
    (((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// Uniformly random seed set of `ceil(init_fraction * train_size)` rows.
pub fn init_pool(train_size: usize, init_fraction: f64, seed: u64) -> Result<PoolState> {
    if train_size == 0 {
        return Err(Error::Pool("training pool is empty".into()));
    }
    if !(init_fraction > 0.0 && init_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "init_fraction must lie in (0, 1], got {init_fraction}"
        )));
    }
    let count = initial_label_count(train_size, init_fraction);
    let mut initial = index::sample(&mut seed::rng(seed), train_size, count).into_vec();
    initial.sort_unstable();
    Ok(PoolState::with_initial(train_size, initial))
}

impl PoolState {
    /// Pool over rows `0..size` with `initial` already labelled.
    ///
    /// Panics if an initial index is out of range or repeated.
    pub fn with_initial(size: usize, initial: Vec<usize>) -> Self {
        let labeled: BTreeSet<usize> = initial.iter().copied().collect();
        assert_eq!(labeled.len(), initial.len(), "duplicate initial index");
        assert!(
            labeled.iter().all(|&i| i < size),
            "initial index out of range"
        );
        let unlabeled = (0..size).filter(|i| !labeled.contains(i)).collect();
        PoolState {
            size,
            labeled,
            unlabeled,
            initial,
            history: Vec::new(),
        }
    }

    /// Moves `indices` from `U` to `L` and records them as one round.
    pub fn commit_labels(&mut self, indices: &[usize]) -> Result<()> {
        if indices.is_empty() {
            return Err(Error::Pool("cannot commit an empty batch".into()));
        }
        let mut seen = BTreeSet::new();
        for &i in indices {
            if !self.unlabeled.contains(&i) || !seen.insert(i) {
                return Err(Error::Pool(format!(
                    "index {i} is not in the unlabelled pool"
                )));
            }
        }
        for &i in indices {
            self.unlabeled.remove(&i);
            self.labeled.insert(i);
        }
        self.history.push(indices.to_vec());
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn labeled(&self) -> &BTreeSet<usize> {
        &self.labeled
    }

    pub fn unlabeled(&self) -> &BTreeSet<usize> {
        &self.unlabeled
    }

    pub fn labeled_vec(&self) -> Vec<usize> {
        self.labeled.iter().copied().collect()
    }

    pub fn unlabeled_vec(&self) -> Vec<usize> {
        self.unlabeled.iter().copied().collect()
    }

    pub fn initial(&self) -> &[usize] {
        &self.initial
    }

    pub fn history(&self) -> &[Vec<usize>] {
        &self.history
    }

    pub fn labeled_fraction(&self) -> f64 {
        self.labeled.len() as f64 / self.size as f64
    }

    /// Checks disjointness, coverage and history accounting.
    pub fn check_invariants(&self) -> Result<()> {
        if self.labeled.len() + self.unlabeled.len() != self.size {
            return Err(Error::Pool("|L| + |U| differs from the pool size".into()));
        }
        if self.labeled.intersection(&self.unlabeled).next().is_some() {
            return Err(Error::Pool("L and U overlap".into()));
        }
        let mut replay: BTreeSet<usize> = BTreeSet::new();
        for &i in self.initial.iter().chain(self.history.iter().flatten()) {
            if !replay.insert(i) {
                return Err(Error::Pool(format!("index {i} labelled twice")));
            }
        }
        if replay != self.labeled {
            return Err(Error::Pool(
                "initial set plus history differs from L".into(),
            ));
        }
        Ok(())
    }
}
