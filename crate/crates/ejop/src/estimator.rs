//! Kernel estimate of the class-probability function.
//!
//! `estimate_probs` produces the vector-valued estimate at a query point:
//! kernel-weighted class frequencies (`raw`), with every weight falling back
//! to `1/n` (global class frequencies) when no training point lies inside
//! the kernel support, and a softmaxed copy (`smoothed`) that the gradient
//! estimator differences.
//!
//! The module also houses `OffsetProbeSet`, the shared evaluation path used
//! when one point's estimate is needed at all `2d` axis offsets `x ± t e_i`:
//! it computes base squared distances once and updates them per coordinate,
//! which is what keeps Jacobian estimation at `O(n d)` per point instead of
//! `O(n d^2)`. Both paths count their evaluations so the cost contract can
//! be audited.

use ndarray::ArrayView1;

use crate::data::{EstimatorParams, SimplexVector};
use crate::neighbors::NeighborIndex;

/// A class-probability estimate at one point.
#[derive(Debug, Clone)]
pub struct FunctionEstimate {
    /// Kernel-weighted class frequencies (sums to 1).
    pub raw: SimplexVector,
    /// Softmax of `raw`; strictly positive entries. Gradient estimation
    /// differences this vector.
    pub smoothed: SimplexVector,
    /// Number of training points inside the kernel support.
    pub neighbor_count: usize,
}

/// Numerically stabilized softmax: invariant under adding a constant to all
/// entries (the max is subtracted before exponentiation).
pub fn softmax(v: &[f64]) -> SimplexVector {
    assert!(!v.is_empty(), "softmax of empty vector");
    let max = v.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let exps: Vec<f64> = v.iter().map(|&x| (x - max).exp()).collect();
    SimplexVector::from_weights(&exps).expect("positive weights")
}

/// Estimate class probabilities at `x` from the indexed sample.
///
/// Weights are `K(||x - x_i|| / h)` normalized over the sample; if no point
/// lies inside the kernel support the weights collapse to `1/n`, i.e. the
/// raw estimate becomes the global class frequencies.
pub fn estimate_probs(
    index: &NeighborIndex,
    x: ArrayView1<'_, f64>,
    params: &EstimatorParams,
) -> FunctionEstimate {
    let ds = index.dataset();
    let support = params.kernel.support_multiplier * params.h;
    let mut class_weights = vec![0.0; ds.class_count()];
    let mut neighbor_count = 0usize;
    for (i, p) in ds.points().outer_iter().enumerate() {
        let dist = crate::neighbors::euclidean(x, p);
        if dist <= support {
            class_weights[ds.label(i)] += params.kernel.eval(dist / params.h);
            neighbor_count += 1;
        }
    }
    finish_estimate(ds, class_weights, neighbor_count)
}

fn finish_estimate(
    ds: &crate::data::LabeledDataset,
    class_weights: Vec<f64>,
    neighbor_count: usize,
) -> FunctionEstimate {
    let total: f64 = class_weights.iter().sum();
    let raw = if total > 0.0 {
        SimplexVector::from_weights(&class_weights).expect("nonnegative kernel weights")
    } else {
        SimplexVector::from_weights(&class_counts(ds)).expect("nonempty dataset")
    };
    let smoothed = softmax(raw.probs());
    FunctionEstimate {
        raw,
        smoothed,
        neighbor_count,
    }
}

fn class_counts(ds: &crate::data::LabeledDataset) -> Vec<f64> {
    let mut counts = vec![0.0; ds.class_count()];
    for &l in ds.labels() {
        counts[l] += 1.0;
    }
    counts
}

/// One offset evaluation: the estimate at `x + s e_i` plus the ball counts
/// the coordinate gate needs, all from a single pass.
#[derive(Debug, Clone)]
pub(crate) struct OffsetEval {
    pub raw: Vec<f64>,
    pub smoothed: Vec<f64>,
    /// Points within distance `h/2` of the offset point (gate mass).
    pub half_h_count: usize,
    /// Points inside the kernel support around the offset point.
    pub support_count: usize,
}

/// Shared evaluation state for all axis offsets of a single point.
///
/// Base squared distances from `x` to every training point are computed once
/// (`O(n d)`); each offset `x + s e_i` then adjusts them in `O(n)` via
/// `||x + s e_i - x_j||^2 = ||x - x_j||^2 + 2 s (x_i - x_{j,i}) + s^2`.
pub(crate) struct OffsetProbeSet<'a> {
    index: &'a NeighborIndex,
    params: &'a EstimatorParams,
    x: Vec<f64>,
    base_sq: Vec<f64>,
    class_count_cache: Vec<f64>,
    evals: u64,
}

impl<'a> OffsetProbeSet<'a> {
    pub fn new(
        index: &'a NeighborIndex,
        x: ArrayView1<'_, f64>,
        params: &'a EstimatorParams,
    ) -> Self {
        let ds = index.dataset();
        let base_sq: Vec<f64> = ds
            .points()
            .outer_iter()
            .map(|p| {
                let mut acc = 0.0;
                for (a, b) in x.iter().zip(p.iter()) {
                    let diff = a - b;
                    acc += diff * diff;
                }
                acc
            })
            .collect();
        Self {
            index,
            params,
            x: x.to_vec(),
            base_sq,
            class_count_cache: class_counts(ds),
            evals: 0,
        }
    }

    /// Number of function-estimate evaluations performed so far.
    pub fn evals(&self) -> u64 {
        self.evals
    }

    /// Evaluate the smoothed estimate at `x + s e_coord` (one pass over the
    /// sample), also counting the points within `h/2` of the offset point.
    pub fn eval_offset(&mut self, coord: usize, s: f64) -> OffsetEval {
        self.evals += 1;
        let ds = self.index.dataset();
        let h = self.params.h;
        let support = self.params.kernel.support_multiplier * h;
        let half_h = 0.5 * h;
        let xi = self.x[coord];
        let shift = s * s;
        let points = ds.points();
        let col = points.column(coord);

        let mut class_weights = vec![0.0; ds.class_count()];
        let mut half_h_count = 0usize;
        let mut support_count = 0usize;
        for (j, &pj) in col.iter().enumerate() {
            // Round-off can push the adjusted square slightly negative when
            // the offset lands on a training point.
            let sq = (self.base_sq[j] + 2.0 * s * (xi - pj) + shift).max(0.0);
            let dist = sq.sqrt();
            if dist <= half_h {
                half_h_count += 1;
            }
            if dist <= support {
                class_weights[ds.label(j)] += self.params.kernel.eval(dist / h);
                support_count += 1;
            }
        }

        let total: f64 = class_weights.iter().sum();
        let raw_simplex = if support_count > 0 && total > 0.0 {
            SimplexVector::from_weights(&class_weights).expect("nonnegative kernel weights")
        } else {
            SimplexVector::from_weights(&self.class_count_cache).expect("nonempty dataset")
        };
        let smoothed = softmax(raw_simplex.probs());
        OffsetEval {
            raw: raw_simplex.probs().to_vec(),
            smoothed: smoothed.probs().to_vec(),
            half_h_count,
            support_count,
        }
    }
}
