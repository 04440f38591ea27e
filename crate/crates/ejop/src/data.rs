//! Core domain types: labeled datasets, simplex vectors, Jacobian estimates,
//! and the symmetric outer-product matrix, together with their validation
//! invariants. Everything here is immutable after construction and cheap to
//! clone (array storage is shared), so values can be handed to parallel
//! workers freely.

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{EjopError, Result};

/// Tolerance for the simplex sum invariant.
pub const SIMPLEX_SUM_TOL: f64 = 1e-9;

/// Relative symmetry tolerance for [`EjopMatrix`].
pub const SYMMETRY_REL_TOL: f64 = 1e-10;

/// Eigenvalues of an [`EjopMatrix`] may dip below zero by at most this
/// fraction of the largest eigenvalue before the matrix is rejected.
pub const PSD_REL_TOL: f64 = 1e-8;

/// A sample of `n` points in `R^d` with class labels in `[0, c)`.
///
/// Labels are always dense: arbitrary external label sets are remapped at
/// ingestion by [`validate_dataset`], which records the original labels in
/// `label_map` (indexed by the new dense label).
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    points: Arc<Array2<f64>>,
    labels: Arc<Vec<usize>>,
    class_count: usize,
    label_map: Arc<Vec<i64>>,
}

impl LabeledDataset {
    /// Build a dataset from already-dense labels in `[0, class_count)`.
    ///
    /// Used by synthetic generators where the class count is known up front
    /// (some classes may be unobserved in a small sample). External data
    /// goes through [`validate_dataset`] instead.
    pub fn from_dense(
        points: Array2<f64>,
        labels: Vec<usize>,
        class_count: usize,
    ) -> Result<Self> {
        if points.nrows() == 0 || labels.is_empty() {
            return Err(EjopError::EmptyDataset);
        }
        if points.nrows() != labels.len() {
            return Err(EjopError::DimensionMismatch {
                expected: points.nrows(),
                got: labels.len(),
            });
        }
        if class_count < 2 {
            return Err(EjopError::TooFewClasses { found: class_count });
        }
        for (row, point) in points.outer_iter().enumerate() {
            for (col, &v) in point.iter().enumerate() {
                if !v.is_finite() {
                    return Err(EjopError::NonFiniteFeature { row, col });
                }
            }
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(EjopError::Format(format!(
                "label {bad} outside [0, {class_count})"
            )));
        }
        let label_map = (0..class_count as i64).collect();
        Ok(Self {
            points: Arc::new(points),
            labels: Arc::new(labels),
            class_count,
            label_map: Arc::new(label_map),
        })
    }

    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    /// Ambient dimension d.
    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    /// Number of classes c.
    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    pub fn point(&self, i: usize) -> ArrayView1<'_, f64> {
        self.points.row(i)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// Original label for each dense class id.
    pub fn label_map(&self) -> &[i64] {
        &self.label_map
    }

    /// Empirical class frequencies over the whole sample.
    pub fn class_frequencies(&self) -> Vec<f64> {
        let mut freq = vec![0.0; self.class_count];
        for &l in self.labels.iter() {
            freq[l] += 1.0;
        }
        let n = self.n() as f64;
        freq.iter_mut().for_each(|f| *f /= n);
        freq
    }

    /// The class with the most members; ties go to the smaller class id.
    pub fn majority_class(&self) -> usize {
        let mut counts = vec![0usize; self.class_count];
        for &l in self.labels.iter() {
            counts[l] += 1;
        }
        let mut best = 0;
        for (c, &count) in counts.iter().enumerate() {
            if count > counts[best] {
                best = c;
            }
        }
        best
    }

    /// New dataset restricted to `indices` (rows copied, order preserved).
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(EjopError::EmptyDataset);
        }
        let d = self.dim();
        let mut points = Array2::zeros((indices.len(), d));
        let mut labels = Vec::with_capacity(indices.len());
        for (row, &i) in indices.iter().enumerate() {
            points.row_mut(row).assign(&self.points.row(i));
            labels.push(self.labels[i]);
        }
        Ok(Self {
            points: Arc::new(points),
            labels: Arc::new(labels),
            class_count: self.class_count,
            label_map: Arc::clone(&self.label_map),
        })
    }

    /// Replace the feature matrix, keeping labels and class structure.
    /// The new matrix must have the same number of rows.
    pub fn with_points(&self, points: Array2<f64>) -> Result<Self> {
        if points.nrows() != self.n() {
            return Err(EjopError::DimensionMismatch {
                expected: self.n(),
                got: points.nrows(),
            });
        }
        Ok(Self {
            points: Arc::new(points),
            labels: Arc::clone(&self.labels),
            class_count: self.class_count,
            label_map: Arc::clone(&self.label_map),
        })
    }
}

/// Validate raw points and labels, remapping labels to a dense `[0, c)`.
///
/// The mapping sorts the distinct original labels ascending, so e.g. labels
/// `{5, 9}` become `{0, 1}` with `label_map = [5, 9]`.
pub fn validate_dataset(points: Array2<f64>, raw_labels: &[i64]) -> Result<LabeledDataset> {
    if points.nrows() == 0 || raw_labels.is_empty() {
        return Err(EjopError::EmptyDataset);
    }
    if points.nrows() != raw_labels.len() {
        return Err(EjopError::DimensionMismatch {
            expected: points.nrows(),
            got: raw_labels.len(),
        });
    }
    for (row, point) in points.outer_iter().enumerate() {
        for (col, &v) in point.iter().enumerate() {
            if !v.is_finite() {
                return Err(EjopError::NonFiniteFeature { row, col });
            }
        }
    }
    let mut distinct: Vec<i64> = raw_labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(EjopError::TooFewClasses {
            found: distinct.len(),
        });
    }
    let labels: Vec<usize> = raw_labels
        .iter()
        .map(|l| distinct.binary_search(l).expect("label present"))
        .collect();
    Ok(LabeledDataset {
        points: Arc::new(points),
        class_count: distinct.len(),
        labels: Arc::new(labels),
        label_map: Arc::new(distinct),
    })
}

/// A probability vector on the `c`-simplex: nonnegative entries summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexVector {
    probs: Vec<f64>,
}

impl SimplexVector {
    /// Normalize arbitrary nonnegative weights to sum 1.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(EjopError::InvalidParam("empty weight vector".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(EjopError::InvalidParam(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(EjopError::InvalidParam("weights sum to zero".into()));
        }
        Ok(Self {
            probs: weights.iter().map(|w| w / sum).collect(),
        })
    }

    /// Wrap a vector that is already on the simplex (checked).
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(EjopError::InvalidParam(
                "probabilities must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_SUM_TOL {
            return Err(EjopError::InvalidParam(format!(
                "probabilities sum to {sum}, not 1"
            )));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Index of the largest entry; ties go to the smaller index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

/// Per-coordinate gate flags: one per ambient dimension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndicatorVector {
    pub flags: Vec<bool>,
}

impl IndicatorVector {
    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn all_false(d: usize) -> Self {
        Self {
            flags: vec![false; d],
        }
    }
}

/// A gated finite-difference Jacobian at one point: a `d x c` matrix whose
/// row `i` is identically zero whenever the coordinate gate `flags[i]` is off.
#[derive(Debug, Clone)]
pub struct JacobianEstimate {
    entries: Array2<f64>,
    indicators: IndicatorVector,
    point: Array1<f64>,
}

impl JacobianEstimate {
    pub fn new(
        entries: Array2<f64>,
        indicators: IndicatorVector,
        point: Array1<f64>,
    ) -> Result<Self> {
        let d = entries.nrows();
        if indicators.len() != d || point.len() != d {
            return Err(EjopError::DimensionMismatch {
                expected: d,
                got: indicators.len().min(point.len()),
            });
        }
        for (i, row) in entries.outer_iter().enumerate() {
            if !indicators.flags[i] && row.iter().any(|&v| v != 0.0) {
                return Err(EjopError::InvalidParam(format!(
                    "gated row {i} has nonzero entries"
                )));
            }
        }
        Ok(Self {
            entries,
            indicators,
            point,
        })
    }

    /// `d x c` matrix of gated finite differences; column `k` estimates the
    /// gradient of the class-`k` probability.
    pub fn entries(&self) -> ArrayView2<'_, f64> {
        self.entries.view()
    }

    pub fn indicators(&self) -> &IndicatorVector {
        &self.indicators
    }

    pub fn point(&self) -> ArrayView1<'_, f64> {
        self.point.view()
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn class_count(&self) -> usize {
        self.entries.ncols()
    }
}

/// A `d x d` symmetric positive-semidefinite matrix: one point's Jacobian
/// outer product, or the sample average of many.
#[derive(Debug, Clone, PartialEq)]
pub struct EjopMatrix {
    g: Array2<f64>,
}

impl EjopMatrix {
    /// Validate symmetry (relative tolerance [`SYMMETRY_REL_TOL`]) and wrap.
    ///
    /// PSD-ness is not recomputed here -- it is checked where the spectrum
    /// is in hand (see `spectral::eigendecompose`). Constructors in this
    /// crate only produce sums of outer products, which are PSD up to
    /// round-off by construction.
    pub fn new(g: Array2<f64>) -> Result<Self> {
        if g.nrows() != g.ncols() {
            return Err(EjopError::DimensionMismatch {
                expected: g.nrows(),
                got: g.ncols(),
            });
        }
        let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut max_asym = 0.0f64;
        for i in 0..g.nrows() {
            for j in (i + 1)..g.ncols() {
                max_asym = max_asym.max((g[[i, j]] - g[[j, i]]).abs());
            }
        }
        if scale > 0.0 && max_asym > SYMMETRY_REL_TOL * scale {
            return Err(EjopError::NotSymmetric { max_asym });
        }
        Ok(Self { g })
    }

    /// Wrap and symmetrize as `(G + G^T) / 2`, absorbing round-off.
    pub fn new_symmetrized(g: Array2<f64>) -> Result<Self> {
        if g.nrows() != g.ncols() {
            return Err(EjopError::DimensionMismatch {
                expected: g.nrows(),
                got: g.ncols(),
            });
        }
        let sym = (&g + &g.t()) * 0.5;
        Ok(Self { g: sym })
    }

    pub fn zeros(d: usize) -> Self {
        Self {
            g: Array2::zeros((d, d)),
        }
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.g.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.g
    }

    /// Scale by a nonnegative factor (used by the metric-scaling tests).
    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            g: &self.g * alpha,
        }
    }
}

/// Which kernel the function estimator uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelKind {
    /// Uniform weight on the ball: `K(u) = 1` for `u <= support`.
    Boxcar,
    /// `K(u) = exp(-u^2 / 2)` truncated at `u = support`.
    GaussianTruncated,
}

/// Kernel specification. `u = ||x - x_i|| / h`; the kernel's support is
/// `u <= support_multiplier`, i.e. a radius of `support_multiplier * h`
/// in feature space. The default multiplier 1.0 gives the ball `B(x, h)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub support_multiplier: f64,
}

impl KernelSpec {
    pub fn boxcar() -> Self {
        Self {
            kind: KernelKind::Boxcar,
            support_multiplier: 1.0,
        }
    }

    pub fn gaussian_truncated() -> Self {
        Self {
            kind: KernelKind::GaussianTruncated,
            support_multiplier: 1.0,
        }
    }

    /// Kernel value at normalized distance `u >= 0`.
    pub fn eval(&self, u: f64) -> f64 {
        if u > self.support_multiplier {
            return 0.0;
        }
        match self.kind {
            KernelKind::Boxcar => 1.0,
            KernelKind::GaussianTruncated => (-0.5 * u * u).exp(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.support_multiplier > 0.0) || !self.support_multiplier.is_finite() {
            return Err(EjopError::InvalidParam(
                "kernel support multiplier must be positive and finite".into(),
            ));
        }
        Ok(())
    }
}

/// Estimator hyperparameters: bandwidth `h`, finite-difference step `t`,
/// gate confidence `delta`, and the kernel. `h` and `t` are in feature-space
/// units.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorParams {
    pub h: f64,
    pub t: f64,
    pub delta: f64,
    pub kernel: KernelSpec,
}

impl EstimatorParams {
    pub fn new(h: f64, t: f64, delta: f64, kernel: KernelSpec) -> Result<Self> {
        let p = Self {
            h,
            t,
            delta,
            kernel,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(EjopError::InvalidParam("h must be positive".into()));
        }
        if !(self.t > 0.0) || !self.t.is_finite() {
            return Err(EjopError::InvalidParam("t must be positive".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(EjopError::InvalidParam("delta must lie in (0, 1)".into()));
        }
        self.kernel.validate()
    }
}
