//! Train/validation/test split management.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::LabeledDataset;
use crate::error::{EjopError, Result};

/// Absolute count or fraction of the dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitSize {
    Count(usize),
    Fraction(f64),
}

impl SplitSize {
    fn resolve(&self, n: usize) -> Result<usize> {
        match *self {
            SplitSize::Count(c) => Ok(c),
            SplitSize::Fraction(f) => {
                if !(0.0..=1.0).contains(&f) {
                    return Err(EjopError::InfeasibleSplit(format!(
                        "fraction {f} outside [0, 1]"
                    )));
                }
                Ok((f * n as f64).floor() as usize)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train: SplitSize,
    pub val: SplitSize,
    pub test: SplitSize,
    pub stratified: bool,
}

/// Disjoint row-index sets into the original dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Largest-remainder apportionment of `total` across buckets proportional
/// to `weights`, capped by `capacity`.
fn apportion(weights: &[usize], total: usize, capacity: &[usize]) -> Vec<usize> {
    let weight_sum: usize = weights.iter().sum();
    if weight_sum == 0 || total == 0 {
        return vec![0; weights.len()];
    }
    let mut base: Vec<usize> = Vec::with_capacity(weights.len());
    let mut remainders: Vec<(f64, usize)> = Vec::with_capacity(weights.len());
    let mut assigned = 0;
    for (i, &w) in weights.iter().enumerate() {
        let exact = total as f64 * w as f64 / weight_sum as f64;
        let floor = (exact.floor() as usize).min(capacity[i]);
        base.push(floor);
        assigned += floor;
        remainders.push((exact - exact.floor(), i));
    }
    // Hand out the remainder to the largest fractional parts (ties to the
    // smaller bucket index for determinism).
    remainders.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let mut left = total.saturating_sub(assigned);
    let mut cursor = 0;
    while left > 0 {
        let (_, i) = remainders[cursor % remainders.len()];
        if base[i] < capacity[i] {
            base[i] += 1;
            left -= 1;
        }
        cursor += 1;
        if cursor > remainders.len() * (total + 1) {
            break; // capacities exhausted
        }
    }
    base
}

/// Split the dataset into disjoint train/val/test index sets, reproducibly
/// under `seed`. With `stratified`, every split's class mix tracks the
/// dataset's within one sample per class.
pub fn make_splits(ds: &LabeledDataset, spec: &SplitSpec, seed: u64) -> Result<Splits> {
    let n = ds.n();
    let n_train = spec.train.resolve(n)?;
    let n_val = spec.val.resolve(n)?;
    let n_test = spec.test.resolve(n)?;
    if n_train + n_val + n_test > n {
        return Err(EjopError::InfeasibleSplit(format!(
            "{n_train}+{n_val}+{n_test} > {n}"
        )));
    }
    if n_train == 0 || n_test == 0 {
        return Err(EjopError::InfeasibleSplit(
            "train and test must be nonempty".to_string(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if !spec.stratified {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let train = order[..n_train].to_vec();
        let val = order[n_train..n_train + n_val].to_vec();
        let test = order[n_train + n_val..n_train + n_val + n_test].to_vec();
        return Ok(Splits { train, val, test });
    }

    // Stratified: shuffle within each class, then apportion each split's
    // size across classes by largest remainder, consuming each class's
    // shuffled list in order.
    let c = ds.class_count();
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); c];
    for (i, &l) in ds.labels().iter().enumerate() {
        per_class[l].push(i);
    }
    for list in per_class.iter_mut() {
        list.shuffle(&mut rng);
    }
    let class_sizes: Vec<usize> = per_class.iter().map(|l| l.len()).collect();

    let mut remaining = class_sizes.clone();
    let mut cursors = vec![0usize; c];
    let take = |want: usize,
                    remaining: &mut Vec<usize>,
                    cursors: &mut Vec<usize>|
     -> Vec<usize> {
        let alloc = apportion(&class_sizes, want, remaining);
        let mut out = Vec::with_capacity(want);
        for (class, &count) in alloc.iter().enumerate() {
            let start = cursors[class];
            out.extend_from_slice(&per_class[class][start..start + count]);
            cursors[class] += count;
            remaining[class] -= count;
        }
        out
    };
    let train = take(n_train, &mut remaining, &mut cursors);
    let val = take(n_val, &mut remaining, &mut cursors);
    let test = take(n_test, &mut remaining, &mut cursors);
    if train.len() != n_train || val.len() != n_val || test.len() != n_test {
        return Err(EjopError::InfeasibleSplit(
            "stratified apportionment could not fill the requested sizes".to_string(),
        ));
    }
    Ok(Splits { train, val, test })
}
