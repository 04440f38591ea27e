//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by dataset validation, estimation, and the harness.
#[derive(Debug, Error)]
pub enum EjopError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite feature at row {row}, column {col}")]
    NonFiniteFeature { row: usize, col: usize },

    #[error("fewer than 2 distinct classes (found {found})")]
    TooFewClasses { found: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("k = {k} exceeds point count n = {n}")]
    KTooLarge { k: usize, n: usize },

    #[error("matrix not symmetric within tolerance (max asymmetry {max_asym:.3e})")]
    NotSymmetric { max_asym: f64 },

    #[error("matrix not positive semidefinite (eigenvalue {eigval:.3e} below tolerance)")]
    NotPsd { eigval: f64 },

    #[error("rank-deficient basis: column rank {rank} < {cols}")]
    RankDeficient { rank: usize, cols: usize },

    #[error("class {class} has {size} members, need at least {needed}")]
    ClassTooSmall {
        class: usize,
        size: usize,
        needed: usize,
    },

    #[error("requested {requested} samples without replacement from {available}")]
    SampleTooLarge { requested: usize, available: usize },

    #[error("infeasible split: {0}")]
    InfeasibleSplit(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<EjopError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl EjopError {
    /// Tag an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        EjopError::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, EjopError>;
