//! Accuracy metrics, time-based resampling, hyperparameter sweeps and the
//! aggregate report.

mod metrics;
mod report;
mod resample;
mod sweep;

use std::path::PathBuf;

use thiserror::Error;

pub use metrics::{accuracy, mean_sd, nagelkerke_r2, pseudo_r2, univariate_ttest, ConfusionCounts, TTest};
pub use report::{MetricReport, MetricRow, RepetitionResult, SweepRecord};
pub use resample::{time_based_resample, Split, SplitPlan, TrainPool};
pub use sweep::{hyperparameter_sweep, knn_k_grid, svm_c_grid, SweepData, SweepResult, SweepRow};

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("a class has no observations")]
    EmptyClass,
    #[error("fitted log-likelihood {ll_fit} is below null {ll_null} (n = {n})")]
    InvalidLikelihoodOrder { ll_fit: f64, ll_null: f64, n: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid split plan: {0}")]
    InvalidPlan(String),
    #[error("test window has {bankrupt} bankrupt and {non_bankrupt} non-bankrupt observations, need {needed} of each")]
    WindowTooSparse { needed: usize, bankrupt: usize, non_bankrupt: usize },
    #[error("hyperparameter grid is empty")]
    EmptyGrid,
    #[error(transparent)]
    Classifier(#[from] crate::classifiers::ClassifierError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
