//! The full classification protocol: per run seed, split the data, tune on
//! the validation portion, fit the chosen metric on the training portion,
//! classify the test portion, and aggregate across runs.
//!
//! Tuning and fitting only ever receive the train and validation subsets;
//! the test subset enters exactly once, as frozen queries.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ndarray::{Array1, Array2};

use crate::classify::{classify_all, transformed_index, ClassifierRule, MetricChoice};
use crate::data::{EstimatorParams, LabeledDataset};
use crate::error::{EjopError, Result};
use crate::harness::config::{ClassifierKind, ExperimentConfig, MetricKind};
use crate::harness::splits::make_splits;
use crate::harness::tune::{tune, TuneChoice, TuneGrids, TuneTrace};
use crate::jacobian::{estimate_ejop, EjopOptions, GradientGateConfig};
use crate::neighbors::NeighborIndex;
use crate::relieff::{relieff_weights, ReliefFConfig, SampleCount};
use crate::spectral::eigendecompose;

fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fit the requested metric on the training subset alone.
pub(crate) fn fit_metric(
    kind: MetricKind,
    train: &LabeledDataset,
    h_est: f64,
    t: f64,
    config: &ExperimentConfig,
    run_seed: u64,
) -> Result<MetricChoice> {
    match kind {
        MetricKind::Euclidean => Ok(MetricChoice::Euclidean),
        MetricKind::Relieff => {
            let weights = relieff_weights(
                train,
                &ReliefFConfig {
                    k_hits: config.relieff_k,
                    iterations: SampleCount::All,
                    seed: run_seed,
                },
            )?;
            Ok(MetricChoice::Diagonal(weights.weights))
        }
        MetricKind::Ejop => {
            let index = NeighborIndex::build(train)?;
            let params = EstimatorParams::new(h_est, t, config.delta, config.kernel)?;
            let gate = GradientGateConfig::with_mode(
                train.n(),
                train.dim(),
                config.delta,
                config.gate_mode,
            )?;
            let eval_points = match config.ejop_eval_points {
                Some(m) if m < train.n() => {
                    let mut order: Vec<usize> = (0..train.n()).collect();
                    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(run_seed, 0xE7A1));
                    order.shuffle(&mut rng);
                    order.truncate(m);
                    order.sort_unstable();
                    Some(order)
                }
                _ => None,
            };
            let g = estimate_ejop(
                &index,
                &params,
                &gate,
                &EjopOptions::default(),
                eval_points.as_deref(),
            )?;
            Ok(MetricChoice::Ejop(eigendecompose(&g)?))
        }
    }
}

/// Per-column standardization statistics, fit on the training subset only.
pub(crate) fn standardize_stats(train: &LabeledDataset) -> (Array1<f64>, Array1<f64>) {
    let d = train.dim();
    let n = train.n() as f64;
    let mut mean = Array1::zeros(d);
    for row in train.points().outer_iter() {
        mean += &row;
    }
    mean /= n;
    let mut var = Array1::<f64>::zeros(d);
    for row in train.points().outer_iter() {
        for j in 0..d {
            let diff = row[j] - mean[j];
            var[j] += diff * diff;
        }
    }
    var /= n;
    let scale = var.mapv(|v| {
        let s = v.sqrt();
        if s > 0.0 {
            s
        } else {
            1.0
        }
    });
    (mean, scale)
}

pub(crate) fn standardize_apply(
    ds: &LabeledDataset,
    mean: &Array1<f64>,
    scale: &Array1<f64>,
) -> Result<LabeledDataset> {
    let mut points = Array2::zeros((ds.n(), ds.dim()));
    for (i, row) in ds.points().outer_iter().enumerate() {
        for j in 0..ds.dim() {
            points[[i, j]] = (row[j] - mean[j]) / scale[j];
        }
    }
    ds.with_points(points)
}

/// One run's outcome for a (metric, classifier) row.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub seed: u64,
    pub error: f64,
    pub choice: TuneChoice,
    pub trace: TuneTrace,
    /// Predicted dense class ids for the test subset, in test order.
    pub predictions: Vec<usize>,
    /// True dense class ids for the test subset.
    pub truth: Vec<usize>,
}

/// Aggregated row of the report.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub dataset: String,
    pub metric: MetricKind,
    pub classifier: ClassifierKind,
    pub mean_error: f64,
    /// Sample standard deviation over runs (0 for a single run).
    pub std_error: f64,
    pub wall_secs: f64,
    pub runs: Vec<RunResult>,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
}

/// Run the experiment protocol on an already-loaded dataset.
pub fn run_experiment(
    config: &ExperimentConfig,
    ds: &LabeledDataset,
    dataset_name: &str,
) -> Result<ExperimentReport> {
    if config.runs == 0 {
        return Err(EjopError::InvalidParam("runs must be at least 1".into()));
    }
    if config.metrics.is_empty() || config.classifiers.is_empty() {
        return Err(EjopError::InvalidParam(
            "need at least one metric and classifier".into(),
        ));
    }
    let grids = TuneGrids::from_config(config)?;

    let mut metrics = config.metrics.clone();
    metrics.sort_unstable();
    metrics.dedup();
    let mut classifiers = config.classifiers.clone();
    classifiers.sort_unstable();
    classifiers.dedup();

    // Split/standardize once per run, shared across rows.
    struct RunData {
        seed: u64,
        train: LabeledDataset,
        val: LabeledDataset,
        test: LabeledDataset,
    }
    let mut run_data = Vec::with_capacity(config.runs);
    for run in 0..config.runs {
        let seed = mix_seed(config.base_seed, run as u64);
        let splits = make_splits(ds, &config.split, seed).map_err(|e| e.in_stage("split"))?;
        let mut train = ds.subset(&splits.train).map_err(|e| e.in_stage("split"))?;
        let mut val = ds.subset(&splits.val).map_err(|e| e.in_stage("split"))?;
        let mut test = ds.subset(&splits.test).map_err(|e| e.in_stage("split"))?;
        if config.standardize {
            let (mean, scale) = standardize_stats(&train);
            train = standardize_apply(&train, &mean, &scale)?;
            val = standardize_apply(&val, &mean, &scale)?;
            test = standardize_apply(&test, &mean, &scale)?;
        }
        run_data.push(RunData {
            seed,
            train,
            val,
            test,
        });
    }

    let mut rows = Vec::new();
    for &metric in &metrics {
        for &classifier in &classifiers {
            let started = Instant::now();
            let mut runs = Vec::with_capacity(config.runs);
            for data in &run_data {
                let (choice, fitted, trace) = tune(
                    metric,
                    classifier,
                    &data.train,
                    &data.val,
                    &grids,
                    config,
                    data.seed,
                )?;
                let index =
                    transformed_index(&data.train, &fitted).map_err(|e| e.in_stage("fit"))?;
                let test_points = fitted
                    .transform(data.test.points())
                    .map_err(|e| e.in_stage("classify"))?;
                let rule = match classifier {
                    ClassifierKind::Knn => {
                        ClassifierRule::Knn(choice.k.expect("knn tuning yields k"))
                    }
                    ClassifierKind::Hnn => {
                        ClassifierRule::Hnn(choice.h_classify.expect("hnn tuning yields h"))
                    }
                };
                let predictions = classify_all(&index, test_points.view(), rule)
                    .map_err(|e| e.in_stage("classify"))?;
                let error = crate::classify::evaluate_error(&predictions, data.test.labels())
                    .map_err(|e| e.in_stage("classify"))?;
                runs.push(RunResult {
                    seed: data.seed,
                    error,
                    choice,
                    trace,
                    predictions,
                    truth: data.test.labels().to_vec(),
                });
            }
            let mean = runs.iter().map(|r| r.error).sum::<f64>() / runs.len() as f64;
            let std = if runs.len() > 1 {
                (runs
                    .iter()
                    .map(|r| (r.error - mean) * (r.error - mean))
                    .sum::<f64>()
                    / (runs.len() - 1) as f64)
                    .sqrt()
            } else {
                0.0
            };
            rows.push(ReportRow {
                dataset: dataset_name.to_string(),
                metric,
                classifier,
                mean_error: mean,
                std_error: std,
                wall_secs: started.elapsed().as_secs_f64(),
                runs,
            });
        }
    }
    Ok(ExperimentReport { rows })
}

/// Summary CSV. Wall-clock is deliberately excluded so identical
/// config+seed yields byte-identical output.
pub fn report_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("dataset,metric,classifier,mean_error,std_error,runs,chosen\n");
    for row in &report.rows {
        let chosen: Vec<String> = row.runs.iter().map(|r| r.choice.summary()).collect();
        let _ = writeln!(
            out,
            "{},{},{},{:.17e},{:.17e},{},{}",
            row.dataset,
            row.metric,
            row.classifier,
            row.mean_error,
            row.std_error,
            row.runs.len(),
            chosen.join(";"),
        );
    }
    out
}

/// Per-run CSV detail.
pub fn runs_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("dataset,metric,classifier,run,seed,error,chosen\n");
    for row in &report.rows {
        for (i, run) in row.runs.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.17e},{}",
                row.dataset,
                row.metric,
                row.classifier,
                i,
                run.seed,
                run.error,
                run.choice.summary(),
            );
        }
    }
    out
}

/// Aligned text table for terminals.
pub fn report_table(report: &ExperimentReport) -> String {
    let mut lines: Vec<[String; 5]> = vec![[
        "dataset".into(),
        "metric".into(),
        "classifier".into(),
        "error %".into(),
        "wall s".into(),
    ]];
    for row in &report.rows {
        lines.push([
            row.dataset.clone(),
            row.metric.to_string(),
            row.classifier.to_string(),
            format!("{:.2} ± {:.2}", row.mean_error * 100.0, row.std_error * 100.0),
            format!("{:.1}", row.wall_secs),
        ]);
    }
    let mut widths = [0usize; 5];
    for line in &lines {
        for (w, field) in widths.iter_mut().zip(line.iter()) {
            *w = (*w).max(field.len());
        }
    }
    let mut out = String::new();
    for (i, line) in lines.iter().enumerate() {
        let rendered: Vec<String> = line
            .iter()
            .zip(widths.iter())
            .map(|(f, w)| format!("{f:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", rendered.join("  ").trim_end());
        if i == 0 {
            let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 8));
        }
    }
    out
}

/// Write `report.csv`, `runs.csv`, `report.txt`, and per-point predictions
/// under `dir`.
pub fn emit_report(report: &ExperimentReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.csv"), report_csv(report))?;
    fs::write(dir.join("runs.csv"), runs_csv(report))?;
    fs::write(dir.join("report.txt"), report_table(report))?;
    let pred_dir = dir.join("predictions");
    fs::create_dir_all(&pred_dir)?;
    for row in &report.rows {
        for (i, run) in row.runs.iter().enumerate() {
            let mut out = String::from("index,predicted,truth\n");
            for (j, (p, t)) in run.predictions.iter().zip(run.truth.iter()).enumerate() {
                let _ = writeln!(out, "{j},{p},{t}");
            }
            fs::write(
                pred_dir.join(format!("{}_{}_run{}.csv", row.metric, row.classifier, i)),
                out,
            )?;
        }
    }
    Ok(())
}
