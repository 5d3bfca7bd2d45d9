use itertools::Itertools;

use crate::dataset::N_SUBSETS;
use crate::{Error, Result};

/// A split of the ten subsets into training and test pools.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FoldSpec {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl FoldSpec {
    /// Validates disjointness and coverage of all subsets.
    pub fn new(mut train: Vec<usize>, mut test: Vec<usize>) -> Result<Self> {
        train.sort_unstable();
        train.dedup();
        test.sort_unstable();
        test.dedup();
        if let Some(&k) = train.iter().chain(&test).find(|&&k| k >= N_SUBSETS) {
            return Err(Error::InvalidArgument(format!("subset index {k} out of range")));
        }
        if let Some(&k) = train.iter().find(|k| test.contains(k)) {
            return Err(Error::Overlap(k));
        }
        if train.is_empty() || test.is_empty() || train.len() + test.len() != N_SUBSETS {
            return Err(Error::InvalidArgument(format!(
                "fold must split all {N_SUBSETS} subsets into nonempty train and test pools"
            )));
        }
        Ok(Self { train, test })
    }

    pub fn from_train(train: &[usize]) -> Result<Self> {
        let test = (0..N_SUBSETS).filter(|k| !train.contains(k)).collect();
        Self::new(train.to_vec(), test)
    }

    pub fn n(&self) -> usize {
        self.train.len()
    }

    pub fn train_mask(&self) -> u16 {
        self.train.iter().fold(0, |m, &k| m | (1 << k))
    }

    pub fn contains_train(&self, subset: usize) -> bool {
        self.train.contains(&subset)
    }
}

pub(crate) fn subset_list(s: &[usize]) -> String {
    s.iter().join(" ")
}

/// All `C(10, n)` folds, training sets in lexicographic order.
pub fn enumerate_folds(n: usize) -> Result<Vec<FoldSpec>> {
    if !(1..N_SUBSETS).contains(&n) {
        return Err(Error::InvalidArgument(format!("N = {n} must lie in [1, {}]", N_SUBSETS - 1)));
    }
    (0..N_SUBSETS).combinations(n).map(|train| FoldSpec::from_train(&train)).collect()
}
