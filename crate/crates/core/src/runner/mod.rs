//! Experiment orchestration: configuration, file-backed pipeline stages
//! with content-hash caches, the synthetic data generator and report
//! rendering.

mod chart;
mod config;
mod pipeline;
mod synthetic;

use std::path::PathBuf;

use thiserror::Error;

pub use chart::render_svg;
pub use config::{
    BackendConfig, CorpusPaths, ExperimentConfig, HyperConfig, LexiconPaths, SweepMode, ENV_BACKEND_URL, ENV_OUT,
};
pub use pipeline::{
    read_sentiment_csv, run, write_sentiment_csv, CellStatus, Pipeline, RunManifest, RunOutcome, Stage, StageTiming,
};
pub use synthetic::{generate_synthetic, synthesize, SyntheticData, SyntheticManifest, SyntheticOutput, SyntheticSpec};

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid synthetic spec: {0}")]
    InvalidSynthetic(String),
    #[error("stage {stage} needs {missing}; run that stage first")]
    MissingInput { stage: &'static str, missing: String },
    #[error("no variable set could be assembled")]
    NoUsableCells,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error(transparent)]
    Lexicon(#[from] crate::lexicon::LexiconError),
    #[error(transparent)]
    Scoring(#[from] crate::scoring::ScoringError),
    #[error(transparent)]
    Adaptation(#[from] crate::adaptation::AdaptationError),
    #[error(transparent)]
    Features(#[from] crate::features::FeatureError),
    #[error(transparent)]
    Evaluation(#[from] crate::evaluation::EvaluationError),
}
