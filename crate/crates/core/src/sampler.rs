//! Batch construction: a plain shuffled epoch and two-step active sampling
//! that first draws a size class uniformly, then an instance within it.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    Shuffle,
    Active,
}

/// Dataset indices grouped by instance size.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClassIndex {
    classes: BTreeMap<usize, Vec<usize>>,
}

impl ClassIndex {
    /// `sizes[i]` is the city count of dataset entry `i`.
    pub fn from_sizes(sizes: &[usize]) -> Self {
        let mut classes: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &n) in sizes.iter().enumerate() {
            classes.entry(n).or_default().push(i);
        }
        Self { classes }
    }

    /// Sizes present in the dataset, ascending.
    pub fn class_keys(&self) -> Vec<usize> {
        self.classes.keys().copied().collect()
    }

    pub fn members(&self, n: usize) -> &[usize] {
        self.classes.get(&n).map_or(&[], |v| v.as_slice())
    }

    pub fn len(&self) -> usize {
        self.classes.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

/// One epoch: a uniform permutation of `0..dataset_size` cut into batches;
/// the last batch may be short.
pub fn shuffle_batches(dataset_size: usize, batch_size: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(invalid!("batch size must be at least 1"));
    }
    let mut order: Vec<usize> = (0..dataset_size).collect();
    order.shuffle(&mut rng_from_seed(seed));
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Two-step sampling, both steps with replacement: `batch_size` classes drawn
/// uniformly from the represented sizes, then one instance uniformly from
/// each drawn class.
pub fn active_batches(
    index: &ClassIndex,
    batch_size: usize,
    batches_per_epoch: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(invalid!("batch size must be at least 1"));
    }
    let keys = index.class_keys();
    if keys.is_empty() {
        return Err(invalid!("active sampling needs at least one non-empty class"));
    }
    let mut rng = rng_from_seed(seed);
    Ok((0..batches_per_epoch)
        .map(|_| {
            (0..batch_size)
                .map(|_| {
                    let class = keys[rng.gen_range(0..keys.len())];
                    let members = index.members(class);
                    members[rng.gen_range(0..members.len())]
                })
                .collect()
        })
        .collect())
}

/// Batches per epoch under active sampling, equal to the shuffle epoch's count.
pub fn active_epoch_len(dataset_size: usize, batch_size: usize) -> usize {
    dataset_size.div_ceil(batch_size.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn shuffle_partition() {
        let b = shuffle_batches(10, 3, 1).unwrap();
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 3, 3, 1]);
        let mut all: Vec<usize> = b.concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(b, shuffle_batches(10, 3, 1).unwrap());
        assert!(shuffle_batches(0, 3, 1).unwrap().is_empty());
        assert!(shuffle_batches(10, 0, 1).is_err());
    }

    #[test]
    fn active_single_class() {
        let idx = ClassIndex::from_sizes(&[7, 7, 7]);
        let b = active_batches(&idx, 5, 4, 3).unwrap();
        assert!(b.iter().flatten().all(|&i| i < 3));
        assert_eq!(b.len(), 4);
        assert!(b.iter().all(|x| x.len() == 5));
    }

    #[test]
    fn active_repeats_singleton_class() {
        let idx = ClassIndex::from_sizes(&[10, 20]);
        let b = active_batches(&idx, 16, 1, 0).unwrap();
        let count0 = b[0].iter().filter(|&&i| i == 0).count();
        assert!(count0 >= 2, "singleton should repeat within a batch");
    }

    #[test]
    fn active_rejects_empty() {
        assert!(active_batches(&ClassIndex::default(), 4, 1, 0).is_err());
    }

    #[test]
    fn class_index_covers_everything_once() {
        let sizes = [5, 9, 5, 7, 9, 9];
        let idx = ClassIndex::from_sizes(&sizes);
        assert_eq!(idx.class_keys(), vec![5, 7, 9]);
        assert_eq!(idx.len(), 6);
        assert_eq!(idx.members(9), &[1, 4, 5]);
        assert_eq!(active_epoch_len(10, 3), 4);
    }
}
