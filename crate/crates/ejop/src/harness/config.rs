//! Flat key-value configuration for the experiment and recovery drivers.
//!
//! The file format is line-oriented `key = value` with `#` comments. Every
//! key can be overridden from the command line via `--set key=value`; the
//! same `set_key` path handles both, so flags and file entries cannot
//! drift. Serialization uses the shortest decimal that round-trips each
//! float, making `parse(serialize(config)) == config` exact.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::data::{KernelKind, KernelSpec};
use crate::error::{EjopError, Result};
use crate::harness::splits::{SplitSize, SplitSpec};
use crate::jacobian::GateMode;
use crate::synthetic::{RecoveryConfig, RecoverySchedule, SamplingLaw};

/// On-disk dataset encodings the harness ingests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    /// One row per point, final column an integer label.
    Csv,
    /// IDX image/label file pair (the de facto MNIST encoding).
    Idx,
}

impl FromStr for DatasetFormat {
    type Err = EjopError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(DatasetFormat::Csv),
            "idx" => Ok(DatasetFormat::Idx),
            other => Err(EjopError::Format(format!("unknown dataset format {other}"))),
        }
    }
}

impl std::fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DatasetFormat::Csv => write!(f, "csv"),
            DatasetFormat::Idx => write!(f, "idx"),
        }
    }
}

/// The distance matrix fitted per run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MetricKind {
    Euclidean,
    Relieff,
    Ejop,
}

impl FromStr for MetricKind {
    type Err = EjopError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(MetricKind::Euclidean),
            "relieff" => Ok(MetricKind::Relieff),
            "ejop" => Ok(MetricKind::Ejop),
            other => Err(EjopError::Format(format!("unknown metric {other}"))),
        }
    }
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MetricKind::Euclidean => write!(f, "euclidean"),
            MetricKind::Relieff => write!(f, "relieff"),
            MetricKind::Ejop => write!(f, "ejop"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ClassifierKind {
    Knn,
    Hnn,
}

impl FromStr for ClassifierKind {
    type Err = EjopError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "knn" => Ok(ClassifierKind::Knn),
            "hnn" => Ok(ClassifierKind::Hnn),
            other => Err(EjopError::Format(format!("unknown classifier {other}"))),
        }
    }
}

impl std::fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ClassifierKind::Knn => write!(f, "knn"),
            ClassifierKind::Hnn => write!(f, "hnn"),
        }
    }
}

fn gate_mode_to_string(mode: GateMode) -> String {
    match mode {
        GateMode::VcBound => "vc-bound".to_string(),
        GateMode::MinCount(k) => format!("min-count:{k}"),
        GateMode::MinSupport(k) => format!("min-support:{k}"),
    }
}

fn gate_mode_from_str(s: &str) -> Result<GateMode> {
    if s == "vc-bound" {
        return Ok(GateMode::VcBound);
    }
    if let Some(rest) = s.strip_prefix("min-count:") {
        let k: usize = rest
            .parse()
            .map_err(|_| EjopError::Format(format!("bad min-count value {rest}")))?;
        return Ok(GateMode::MinCount(k));
    }
    if let Some(rest) = s.strip_prefix("min-support:") {
        let k: usize = rest
            .parse()
            .map_err(|_| EjopError::Format(format!("bad min-support value {rest}")))?;
        return Ok(GateMode::MinSupport(k));
    }
    Err(EjopError::Format(format!("unknown gate mode {s}")))
}

fn kernel_to_string(k: KernelSpec) -> String {
    let name = match k.kind {
        KernelKind::Boxcar => "boxcar",
        KernelKind::GaussianTruncated => "gaussian",
    };
    if k.support_multiplier == 1.0 {
        name.to_string()
    } else {
        format!("{name}:{}", k.support_multiplier)
    }
}

fn kernel_from_str(s: &str) -> Result<KernelSpec> {
    let (name, mult) = match s.split_once(':') {
        Some((n, m)) => (
            n,
            m.parse::<f64>()
                .map_err(|_| EjopError::Format(format!("bad kernel multiplier {m}")))?,
        ),
        None => (s, 1.0),
    };
    let kind = match name {
        "boxcar" => KernelKind::Boxcar,
        "gaussian" => KernelKind::GaussianTruncated,
        other => return Err(EjopError::Format(format!("unknown kernel {other}"))),
    };
    Ok(KernelSpec {
        kind,
        support_multiplier: mult,
    })
}

fn split_size_to_string(s: SplitSize) -> String {
    match s {
        SplitSize::Count(n) => n.to_string(),
        SplitSize::Fraction(f) => format!("frac:{f}"),
    }
}

fn split_size_from_str(s: &str) -> Result<SplitSize> {
    if let Some(rest) = s.strip_prefix("frac:") {
        let f: f64 = rest
            .parse()
            .map_err(|_| EjopError::Format(format!("bad fraction {rest}")))?;
        return Ok(SplitSize::Fraction(f));
    }
    let n: usize = s
        .parse()
        .map_err(|_| EjopError::Format(format!("bad split size {s}")))?;
    Ok(SplitSize::Count(n))
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| EjopError::Format(format!("bad number {v}")))
        })
        .collect()
}

fn parse_usize_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| EjopError::Format(format!("bad integer {v}")))
        })
        .collect()
}

fn parse_u64_list(s: &str) -> Result<Vec<u64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<u64>()
                .map_err(|_| EjopError::Format(format!("bad integer {v}")))
        })
        .collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_bool(s: &str) -> Result<bool> {
    match s {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(EjopError::Format(format!("bad boolean {other}"))),
    }
}

/// Configuration of the classification experiment (`experiment` / `classify`
/// verbs).
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset_path: String,
    /// Labels file for the IDX format (unused for CSV).
    pub labels_path: Option<String>,
    pub dataset_format: DatasetFormat,
    pub split: SplitSpec,
    pub metrics: Vec<MetricKind>,
    pub classifiers: Vec<ClassifierKind>,
    /// Estimation bandwidth grid for the EJOP fit.
    pub h_grid: Vec<f64>,
    /// Finite-difference step grid.
    pub t_grid: Vec<f64>,
    /// kNN neighbor-count grid.
    pub k_grid: Vec<usize>,
    /// hNN classification radius grid.
    pub h_classify_grid: Vec<f64>,
    pub delta: f64,
    pub gate_mode: GateMode,
    pub kernel: KernelSpec,
    /// Standardize columns to train-set mean 0 / std 1 before everything.
    pub standardize: bool,
    pub runs: usize,
    pub base_seed: u64,
    /// Cap on EJOP evaluation points per fit (subsample of the training
    /// points; an approximation for large n). `None` = all.
    pub ejop_eval_points: Option<usize>,
    /// ReliefF neighbors per class.
    pub relieff_k: usize,
    pub output_dir: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset_path: String::new(),
            labels_path: None,
            dataset_format: DatasetFormat::Csv,
            split: SplitSpec {
                train: SplitSize::Fraction(0.6),
                val: SplitSize::Fraction(0.2),
                test: SplitSize::Fraction(0.2),
                stratified: true,
            },
            metrics: vec![MetricKind::Euclidean, MetricKind::Relieff, MetricKind::Ejop],
            classifiers: vec![ClassifierKind::Knn, ClassifierKind::Hnn],
            h_grid: vec![1.0],
            t_grid: vec![0.25],
            k_grid: vec![7],
            h_classify_grid: vec![1.0],
            delta: 0.05,
            gate_mode: GateMode::VcBound,
            kernel: KernelSpec::boxcar(),
            standardize: false,
            runs: 10,
            base_seed: 0,
            ejop_eval_points: None,
            relieff_k: 10,
            output_dir: "out".to_string(),
        }
    }
}

impl ExperimentConfig {
    /// Apply one `key = value` assignment (file line or CLI override).
    pub fn set_key(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "dataset_path" => self.dataset_path = value.to_string(),
            "labels_path" => {
                self.labels_path = if value.is_empty() {
                    None
                } else {
                    Some(value.to_string())
                }
            }
            "dataset_format" => self.dataset_format = value.parse()?,
            "train" => self.split.train = split_size_from_str(value)?,
            "val" => self.split.val = split_size_from_str(value)?,
            "test" => self.split.test = split_size_from_str(value)?,
            "stratified" => self.split.stratified = parse_bool(value)?,
            "metrics" => {
                self.metrics = value
                    .split(',')
                    .map(|v| v.trim().parse())
                    .collect::<Result<_>>()?
            }
            "classifiers" => {
                self.classifiers = value
                    .split(',')
                    .map(|v| v.trim().parse())
                    .collect::<Result<_>>()?
            }
            "h_grid" => self.h_grid = parse_f64_list(value)?,
            "t_grid" => self.t_grid = parse_f64_list(value)?,
            "k_grid" => self.k_grid = parse_usize_list(value)?,
            "h_classify_grid" => self.h_classify_grid = parse_f64_list(value)?,
            "delta" => {
                self.delta = value
                    .parse()
                    .map_err(|_| EjopError::Format(format!("bad delta {value}")))?
            }
            "gate_mode" => self.gate_mode = gate_mode_from_str(value)?,
            "kernel" => self.kernel = kernel_from_str(value)?,
            "standardize" => self.standardize = parse_bool(value)?,
            "runs" => {
                self.runs = value
                    .parse()
                    .map_err(|_| EjopError::Format(format!("bad runs {value}")))?
            }
            "base_seed" => {
                self.base_seed = value
                    .parse()
                    .map_err(|_| EjopError::Format(format!("bad seed {value}")))?
            }
            "ejop_eval_points" => {
                self.ejop_eval_points = if value == "all" {
                    None
                } else {
                    Some(value.parse().map_err(|_| {
                        EjopError::Format(format!("bad ejop_eval_points {value}"))
                    })?)
                }
            }
            "relieff_k" => {
                self.relieff_k = value
                    .parse()
                    .map_err(|_| EjopError::Format(format!("bad relieff_k {value}")))?
            }
            "output_dir" => self.output_dir = value.to_string(),
            other => return Err(EjopError::Format(format!("unknown config key {other}"))),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        apply_lines(text, |k, v| config.set_key(k, v))?;
        Ok(config)
    }

    pub fn serialize(&self) -> String {
        let mut out = String::from("# ejop experiment config\n");
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("dataset_path", self.dataset_path.clone());
        kv(
            "labels_path",
            self.labels_path.clone().unwrap_or_default(),
        );
        kv("dataset_format", self.dataset_format.to_string());
        kv("train", split_size_to_string(self.split.train));
        kv("val", split_size_to_string(self.split.val));
        kv("test", split_size_to_string(self.split.test));
        kv("stratified", self.split.stratified.to_string());
        kv("metrics", join(&self.metrics));
        kv("classifiers", join(&self.classifiers));
        kv("h_grid", join(&self.h_grid));
        kv("t_grid", join(&self.t_grid));
        kv("k_grid", join(&self.k_grid));
        kv("h_classify_grid", join(&self.h_classify_grid));
        kv("delta", self.delta.to_string());
        kv("gate_mode", gate_mode_to_string(self.gate_mode));
        kv("kernel", kernel_to_string(self.kernel));
        kv("standardize", self.standardize.to_string());
        kv("runs", self.runs.to_string());
        kv("base_seed", self.base_seed.to_string());
        kv(
            "ejop_eval_points",
            self.ejop_eval_points
                .map(|v| v.to_string())
                .unwrap_or_else(|| "all".to_string()),
        );
        kv("relieff_k", self.relieff_k.to_string());
        kv("output_dir", self.output_dir.clone());
        out
    }
}

/// Configuration of the synthetic recovery driver (`recover` verb).
#[derive(Debug, Clone, PartialEq)]
pub struct RecoverConfig {
    pub d: usize,
    pub r: usize,
    /// One of `softmax-linear`, `softmax-quadratic`, `radial`.
    pub link: String,
    pub noise: f64,
    pub sampling: SamplingLaw,
    pub model_seed: u64,
    pub n_grid: Vec<usize>,
    pub seeds: Vec<u64>,
    pub c1: f64,
    pub c2: f64,
    pub delta: f64,
    pub gate_mode: GateMode,
    pub kernel: KernelSpec,
    pub oracle_samples: usize,
    pub oracle_seed: u64,
    pub output_dir: String,
}

impl Default for RecoverConfig {
    fn default() -> Self {
        let rc = RecoveryConfig::default();
        Self {
            d: 10,
            r: 2,
            link: "softmax-linear".to_string(),
            noise: 0.05,
            sampling: SamplingLaw::UniformBox { half_width: 1.0 },
            model_seed: 1,
            n_grid: rc.n_grid,
            seeds: rc.seeds,
            c1: rc.schedule.c1,
            c2: rc.schedule.c2,
            delta: rc.delta,
            gate_mode: rc.gate_mode,
            kernel: rc.kernel,
            oracle_samples: rc.oracle_samples,
            oracle_seed: rc.oracle_seed,
            output_dir: "out".to_string(),
        }
    }
}

fn sampling_to_string(s: SamplingLaw) -> String {
    match s {
        SamplingLaw::UniformBox { half_width } => format!("uniform:{half_width}"),
        SamplingLaw::GaussianTruncated { half_width } => format!("gaussian:{half_width}"),
    }
}

fn sampling_from_str(s: &str) -> Result<SamplingLaw> {
    let (name, hw) = s
        .split_once(':')
        .ok_or_else(|| EjopError::Format(format!("bad sampling law {s}")))?;
    let half_width: f64 = hw
        .parse()
        .map_err(|_| EjopError::Format(format!("bad half width {hw}")))?;
    match name {
        "uniform" => Ok(SamplingLaw::UniformBox { half_width }),
        "gaussian" => Ok(SamplingLaw::GaussianTruncated { half_width }),
        other => Err(EjopError::Format(format!("unknown sampling law {other}"))),
    }
}

impl RecoverConfig {
    pub fn set_key(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| EjopError::Format(format!("bad {what} {value}"));
        match key {
            "d" => self.d = value.parse().map_err(|_| bad("d"))?,
            "r" => self.r = value.parse().map_err(|_| bad("r"))?,
            "link" => self.link = value.to_string(),
            "noise" => self.noise = value.parse().map_err(|_| bad("noise"))?,
            "sampling" => self.sampling = sampling_from_str(value)?,
            "model_seed" => self.model_seed = value.parse().map_err(|_| bad("model_seed"))?,
            "n_grid" => self.n_grid = parse_usize_list(value)?,
            "seeds" => self.seeds = parse_u64_list(value)?,
            "c1" => self.c1 = value.parse().map_err(|_| bad("c1"))?,
            "c2" => self.c2 = value.parse().map_err(|_| bad("c2"))?,
            "delta" => self.delta = value.parse().map_err(|_| bad("delta"))?,
            "gate_mode" => self.gate_mode = gate_mode_from_str(value)?,
            "kernel" => self.kernel = kernel_from_str(value)?,
            "oracle_samples" => {
                self.oracle_samples = value.parse().map_err(|_| bad("oracle_samples"))?
            }
            "oracle_seed" => self.oracle_seed = value.parse().map_err(|_| bad("oracle_seed"))?,
            "output_dir" => self.output_dir = value.to_string(),
            other => return Err(EjopError::Format(format!("unknown config key {other}"))),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        apply_lines(text, |k, v| config.set_key(k, v))?;
        Ok(config)
    }

    pub fn serialize(&self) -> String {
        let mut out = String::from("# ejop recovery config\n");
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("d", self.d.to_string());
        kv("r", self.r.to_string());
        kv("link", self.link.clone());
        kv("noise", self.noise.to_string());
        kv("sampling", sampling_to_string(self.sampling));
        kv("model_seed", self.model_seed.to_string());
        kv("n_grid", join(&self.n_grid));
        kv("seeds", join(&self.seeds));
        kv("c1", self.c1.to_string());
        kv("c2", self.c2.to_string());
        kv("delta", self.delta.to_string());
        kv("gate_mode", gate_mode_to_string(self.gate_mode));
        kv("kernel", kernel_to_string(self.kernel));
        kv("oracle_samples", self.oracle_samples.to_string());
        kv("oracle_seed", self.oracle_seed.to_string());
        kv("output_dir", self.output_dir.clone());
        out
    }

    /// The estimator-side configuration this drives.
    pub fn recovery_config(&self) -> RecoveryConfig {
        RecoveryConfig {
            n_grid: self.n_grid.clone(),
            seeds: self.seeds.clone(),
            schedule: RecoverySchedule {
                c1: self.c1,
                c2: self.c2,
            },
            delta: self.delta,
            gate_mode: self.gate_mode,
            kernel: self.kernel,
            oracle_samples: self.oracle_samples,
            oracle_seed: self.oracle_seed,
        }
    }
}

fn apply_lines(text: &str, mut set: impl FnMut(&str, &str) -> Result<()>) -> Result<()> {
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            EjopError::Format(format!("line {}: expected key = value", lineno + 1))
        })?;
        set(key.trim(), value.trim())
            .map_err(|e| EjopError::Format(format!("line {}: {e}", lineno + 1)))?;
    }
    Ok(())
}
