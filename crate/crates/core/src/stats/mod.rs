//! Detection metrics, bootstrap resampling and the tests used to compare
//! configurations.

pub mod bootstrap;
pub mod dunn;
pub mod metrics;
pub mod shapiro;

use thiserror::Error;

pub use bootstrap::{bootstrap, BootstrapConfig, Statistic};
pub use dunn::{dunn_test, DunnPair, ALPHA};
pub use metrics::{
    adjudicated_counts, detection_metrics, fix_rate, score_records, Adjudication, AdjudicationMode,
    ConfusionCounts, DetectionMetrics, RecordScore,
};
pub use shapiro::{shapiro_wilk, ShapiroWilk};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("EMPTY_DATASET: no misuses to measure against")]
    EmptyDataset,
    #[error("MISSING_ADJUDICATION: no explanation verdict for {}", .0.join(", "))]
    MissingAdjudication(Vec<String>),
    #[error("INVALID_COUNTS: {0}")]
    InvalidCounts(String),
    #[error("DEGENERATE_SAMPLE: all values are equal")]
    DegenerateSample,
    #[error("SAMPLE_SIZE: {0} values (need 3 to 5000)")]
    SampleSize(usize),
    #[error("GROUP_TOO_SMALL: group {index} has {size} values (need at least 2)")]
    GroupTooSmall { index: usize, size: usize },
    #[error("NON_FINITE: sample contains NaN or infinity")]
    NonFinite,
    #[error("BOOTSTRAP: {0}")]
    Bootstrap(String),
}

impl StatsError {
    pub fn code(&self) -> &'static str {
        match self {
            StatsError::EmptyDataset => "EMPTY_DATASET",
            StatsError::MissingAdjudication(_) => "MISSING_ADJUDICATION",
            StatsError::InvalidCounts(_) => "INVALID_COUNTS",
            StatsError::DegenerateSample => "DEGENERATE_SAMPLE",
            StatsError::SampleSize(_) => "SAMPLE_SIZE",
            StatsError::GroupTooSmall { .. } => "GROUP_TOO_SMALL",
            StatsError::NonFinite => "NON_FINITE",
            StatsError::Bootstrap(_) => "BOOTSTRAP",
        }
    }
}
