//! kNN and hNN (boxcar) classification under a pluggable metric.
//!
//! All three metric choices reduce to Euclidean distance after an explicit
//! coordinate transform, applied once per experiment: identity, `sqrt(w_j)`
//! column scaling for a diagonal matrix, or the EJOP spectral transform.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;

use crate::data::LabeledDataset;
use crate::error::{EjopError, Result};
use crate::neighbors::NeighborIndex;
use crate::spectral::MetricTransform;

/// The distance matrix `M` in `(x - x')^T M (x - x')`, as a transform.
#[derive(Debug, Clone)]
pub enum MetricChoice {
    /// `M = I`.
    Euclidean,
    /// `M = diag(weights)`, weights nonnegative.
    Diagonal(Vec<f64>),
    /// `M = E_n G_n(X)` via its spectral transform.
    Ejop(MetricTransform),
}

impl MetricChoice {
    /// Transform a point matrix (rows = points) so that Euclidean distance
    /// afterwards equals the `M`-distance.
    pub fn transform(&self, points: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        match self {
            MetricChoice::Euclidean => Ok(points.to_owned()),
            MetricChoice::Diagonal(weights) => {
                if weights.len() != points.ncols() {
                    return Err(EjopError::DimensionMismatch {
                        expected: points.ncols(),
                        got: weights.len(),
                    });
                }
                if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
                    return Err(EjopError::InvalidParam(
                        "diagonal weights must be nonnegative".into(),
                    ));
                }
                let mut out = points.to_owned();
                for (j, &w) in weights.iter().enumerate() {
                    let s = w.sqrt();
                    out.column_mut(j).mapv_inplace(|v| v * s);
                }
                Ok(out)
            }
            MetricChoice::Ejop(transform) => transform.transform_points(points),
        }
    }
}

/// Transform training and query points into the metric's coordinate system.
pub fn apply_metric(
    choice: &MetricChoice,
    train: ArrayView2<'_, f64>,
    queries: ArrayView2<'_, f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if train.ncols() != queries.ncols() {
        return Err(EjopError::DimensionMismatch {
            expected: train.ncols(),
            got: queries.ncols(),
        });
    }
    Ok((choice.transform(train)?, choice.transform(queries)?))
}

/// Majority vote; ties go to the smallest class id among the tied classes.
fn majority_vote(labels: impl Iterator<Item = usize>, class_count: usize) -> Option<usize> {
    let mut counts = vec![0usize; class_count];
    let mut any = false;
    for l in labels {
        counts[l] += 1;
        any = true;
    }
    if !any {
        return None;
    }
    let mut best = 0;
    for (c, &count) in counts.iter().enumerate() {
        if count > counts[best] {
            best = c;
        }
    }
    Some(best)
}

/// Predict by majority vote among the `k` nearest training points.
pub fn knn_classify(index: &NeighborIndex, query: ArrayView1<'_, f64>, k: usize) -> Result<usize> {
    let ds = index.dataset();
    let ids = index.knn_query(query, k)?;
    Ok(majority_vote(ids.iter().map(|&i| ds.label(i)), ds.class_count())
        .expect("k >= 1 neighbors"))
}

/// Predict by majority vote among training points within distance `h`; an
/// empty ball falls back to the global majority class.
pub fn hnn_classify(index: &NeighborIndex, query: ArrayView1<'_, f64>, h: f64) -> Result<usize> {
    if !(h > 0.0) {
        return Err(EjopError::InvalidParam("h must be positive".into()));
    }
    let ds = index.dataset();
    let ids = index.range_query(query, h);
    Ok(
        match majority_vote(ids.iter().map(|&i| ds.label(i)), ds.class_count()) {
            Some(class) => class,
            None => ds.majority_class(),
        },
    )
}

/// A classification rule over a transformed index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClassifierRule {
    Knn(usize),
    Hnn(f64),
}

/// Classify every query row in parallel.
pub fn classify_all(
    index: &NeighborIndex,
    queries: ArrayView2<'_, f64>,
    rule: ClassifierRule,
) -> Result<Vec<usize>> {
    let rows: Vec<_> = queries.outer_iter().collect();
    rows.par_iter()
        .map(|q| match rule {
            ClassifierRule::Knn(k) => knn_classify(index, *q, k),
            ClassifierRule::Hnn(h) => hnn_classify(index, *q, h),
        })
        .collect()
}

/// Fraction of mismatched predictions.
pub fn evaluate_error(predictions: &[usize], truth: &[usize]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(EjopError::DimensionMismatch {
            expected: truth.len(),
            got: predictions.len(),
        });
    }
    if predictions.is_empty() {
        return Err(EjopError::EmptyDataset);
    }
    let wrong = predictions
        .iter()
        .zip(truth.iter())
        .filter(|(p, t)| p != t)
        .count();
    Ok(wrong as f64 / predictions.len() as f64)
}

/// Build an index over a dataset whose points were replaced by their
/// transformed coordinates.
pub fn transformed_index(ds: &LabeledDataset, choice: &MetricChoice) -> Result<NeighborIndex> {
    let transformed = choice.transform(ds.points())?;
    NeighborIndex::build(&ds.with_points(transformed)?)
}
