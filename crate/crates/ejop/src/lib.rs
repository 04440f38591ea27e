//! Expected Jacobian outer-product (EJOP) metric estimation for multi-class
//! nonparametric classification.
//!
//! The pipeline: a kernel estimate of the class-probability function, gated
//! central differences of that estimate to form per-point Jacobians, the
//! sample average of their outer products, and the spectral transform
//! `x -> D^{1/2} V^T x` that turns the averaged matrix into a distance for
//! kNN / hNN classification. Alongside the estimator live a ReliefF
//! diagonal-weight baseline, synthetic multi-index models with analytic
//! Jacobians for subspace-recovery and consistency experiments, and a
//! harness that runs the whole protocol from config files.

pub mod classify;
pub mod data;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod jacobian;
pub mod neighbors;
pub mod relieff;
pub mod spectral;
pub mod synthetic;

pub use data::{
    EjopMatrix, EstimatorParams, IndicatorVector, JacobianEstimate, KernelKind, KernelSpec,
    LabeledDataset, SimplexVector,
};
pub use error::{EjopError, Result};
pub use jacobian::{GateMode, GradientGateConfig};
pub use spectral::MetricTransform;
