//! Range and k-nearest-neighbor queries over the training points.
//!
//! The contractual semantics are a brute-force scan: `range_query(x, h)`
//! returns exactly the ids within the closed ball of radius `h`, ascending
//! by id, and `knn_query(x, k)` the `k` nearest ids sorted by nondecreasing
//! distance with ties broken by smaller id. Distances are Euclidean, taken
//! as `sqrt(sum of squares)` and then compared, so boundary behavior is
//! identical everywhere in the crate.

use ndarray::ArrayView1;

use crate::data::LabeledDataset;
use crate::error::{EjopError, Result};

/// Immutable query structure over a dataset's points.
///
/// The index holds a cheap clone of the dataset (shared storage); concurrent
/// queries from many workers are safe.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    dataset: LabeledDataset,
}

/// Euclidean distance between two points of equal dimension.
pub fn euclidean(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let diff = x - y;
        acc += diff * diff;
    }
    acc.sqrt()
}

impl NeighborIndex {
    /// Build an index over the dataset's points.
    pub fn build(dataset: &LabeledDataset) -> Result<Self> {
        if dataset.n() == 0 {
            return Err(EjopError::EmptyDataset);
        }
        Ok(Self {
            dataset: dataset.clone(),
        })
    }

    pub fn n(&self) -> usize {
        self.dataset.n()
    }

    pub fn dim(&self) -> usize {
        self.dataset.dim()
    }

    pub fn dataset(&self) -> &LabeledDataset {
        &self.dataset
    }

    /// Ids of all points within closed distance `h` of `x`, ascending by id.
    pub fn range_query(&self, x: ArrayView1<'_, f64>, h: f64) -> Vec<usize> {
        assert!(h >= 0.0, "negative radius");
        let mut ids = Vec::new();
        for (i, p) in self.dataset.points().outer_iter().enumerate() {
            if euclidean(x, p) <= h {
                ids.push(i);
            }
        }
        ids
    }

    /// Number of points within closed distance `h` of `x`.
    pub fn range_count(&self, x: ArrayView1<'_, f64>, h: f64) -> usize {
        assert!(h >= 0.0, "negative radius");
        self.dataset
            .points()
            .outer_iter()
            .filter(|p| euclidean(x, *p) <= h)
            .count()
    }

    /// The `k` nearest ids, sorted by nondecreasing distance, ties broken by
    /// smaller id.
    pub fn knn_query(&self, x: ArrayView1<'_, f64>, k: usize) -> Result<Vec<usize>> {
        let n = self.n();
        if k == 0 || k > n {
            return Err(EjopError::KTooLarge { k, n });
        }
        let mut scored: Vec<(f64, usize)> = self
            .dataset
            .points()
            .outer_iter()
            .enumerate()
            .map(|(i, p)| (euclidean(x, p), i))
            .collect();
        // Total order: distance, then id. Distances are finite by the
        // dataset invariant.
        scored.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite distances"));
        Ok(scored.into_iter().take(k).map(|(_, i)| i).collect())
    }
}
