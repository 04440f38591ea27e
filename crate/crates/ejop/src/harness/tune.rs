//! Exhaustive grid search over validation error.
//!
//! Grids are swept in ascending order, bandwidth outermost, so ties resolve
//! toward smaller `h`, then smaller `t`, then smaller `k` (or classification
//! radius) without any extra bookkeeping: only strict improvements replace
//! the incumbent.

use crate::classify::{classify_all, transformed_index, ClassifierRule, MetricChoice};
use crate::data::LabeledDataset;
use crate::error::{EjopError, Result};
use crate::harness::config::{ClassifierKind, ExperimentConfig, MetricKind};
use crate::harness::experiment::fit_metric;

/// Grids swept by `tune`, already sorted ascending.
#[derive(Debug, Clone)]
pub struct TuneGrids {
    pub h_est: Vec<f64>,
    pub t: Vec<f64>,
    pub k: Vec<usize>,
    pub h_classify: Vec<f64>,
}

impl TuneGrids {
    pub fn from_config(config: &ExperimentConfig) -> Result<Self> {
        if config.h_grid.is_empty()
            || config.t_grid.is_empty()
            || config.k_grid.is_empty()
            || config.h_classify_grid.is_empty()
        {
            return Err(EjopError::InvalidParam("empty tuning grid".into()));
        }
        let mut grids = Self {
            h_est: config.h_grid.clone(),
            t: config.t_grid.clone(),
            k: config.k_grid.clone(),
            h_classify: config.h_classify_grid.clone(),
        };
        grids.h_est.sort_by(|a, b| a.partial_cmp(b).unwrap());
        grids.t.sort_by(|a, b| a.partial_cmp(b).unwrap());
        grids.k.sort_unstable();
        grids
            .h_classify
            .sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(grids)
    }
}

/// One evaluated grid cell: the hyperparameters that apply to the pipeline
/// (others `None`) and its validation error.
#[derive(Debug, Clone, PartialEq)]
pub struct TuneChoice {
    pub h_est: Option<f64>,
    pub t: Option<f64>,
    pub k: Option<usize>,
    pub h_classify: Option<f64>,
    pub val_error: f64,
}

impl TuneChoice {
    /// Compact `key=value` rendering for reports.
    pub fn summary(&self) -> String {
        let mut parts = Vec::new();
        if let Some(h) = self.h_est {
            parts.push(format!("h={h}"));
        }
        if let Some(t) = self.t {
            parts.push(format!("t={t}"));
        }
        if let Some(k) = self.k {
            parts.push(format!("k={k}"));
        }
        if let Some(h) = self.h_classify {
            parts.push(format!("hc={h}"));
        }
        parts.join("|")
    }
}

/// The full grid trace, in sweep order.
#[derive(Debug, Clone, PartialEq)]
pub struct TuneTrace {
    pub cells: Vec<TuneChoice>,
}

/// Exhaustively evaluate the grid for one (metric, classifier) pipeline and
/// return the winning cell, its fitted metric, and the whole trace.
///
/// Only the train and validation subsets ever enter here; fitting uses
/// train, scoring uses validation.
pub fn tune(
    metric: MetricKind,
    classifier: ClassifierKind,
    train: &LabeledDataset,
    val: &LabeledDataset,
    grids: &TuneGrids,
    config: &ExperimentConfig,
    run_seed: u64,
) -> Result<(TuneChoice, MetricChoice, TuneTrace)> {
    let estimator_cells: Vec<(Option<f64>, Option<f64>)> = match metric {
        MetricKind::Ejop => grids
            .h_est
            .iter()
            .flat_map(|&h| grids.t.iter().map(move |&t| (Some(h), Some(t))))
            .collect(),
        _ => vec![(None, None)],
    };

    let mut best: Option<(TuneChoice, MetricChoice)> = None;
    let mut cells = Vec::new();
    for (h_est, t) in estimator_cells {
        let fitted = fit_metric(
            metric,
            train,
            h_est.unwrap_or(1.0),
            t.unwrap_or(1.0),
            config,
            run_seed,
        )
        .map_err(|e| e.in_stage("tune"))?;
        let index = transformed_index(train, &fitted).map_err(|e| e.in_stage("tune"))?;
        let val_points = fitted
            .transform(val.points())
            .map_err(|e| e.in_stage("tune"))?;

        let rules: Vec<(TuneChoice, ClassifierRule)> = match classifier {
            ClassifierKind::Knn => grids
                .k
                .iter()
                .map(|&k| {
                    (
                        TuneChoice {
                            h_est,
                            t,
                            k: Some(k),
                            h_classify: None,
                            val_error: f64::NAN,
                        },
                        ClassifierRule::Knn(k),
                    )
                })
                .collect(),
            ClassifierKind::Hnn => grids
                .h_classify
                .iter()
                .map(|&h| {
                    (
                        TuneChoice {
                            h_est,
                            t,
                            k: None,
                            h_classify: Some(h),
                            val_error: f64::NAN,
                        },
                        ClassifierRule::Hnn(h),
                    )
                })
                .collect(),
        };

        for (mut cell, rule) in rules {
            let preds =
                classify_all(&index, val_points.view(), rule).map_err(|e| e.in_stage("tune"))?;
            let error = crate::classify::evaluate_error(&preds, val.labels())
                .map_err(|e| e.in_stage("tune"))?;
            cell.val_error = error;
            cells.push(cell.clone());
            let improves = match &best {
                None => true,
                Some((incumbent, _)) => error < incumbent.val_error,
            };
            if improves {
                best = Some((cell, fitted.clone()));
            }
        }
    }

    let (choice, fitted) = best.expect("grids validated nonempty");
    Ok((choice, fitted, TuneTrace { cells }))
}
