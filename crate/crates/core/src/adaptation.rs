//! One round of self-training: pseudo-label sampled documents with the
//! current scorer, keep the confident sentences (normalized self-entropy at
//! or below a threshold) and fine-tune on them.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{MdnaDocument, Sentence};
use crate::scoring::{
    score_document, BagOfWordsBackend, FineTuneParams, ScoringBackend, ScoringError, SentenceScore, SentimentClass,
    ServiceBackend, ServiceClient, TrainRequest, TrainingReport,
};

/// Simplex tolerance for [`self_entropy`] inputs.
const ENTROPY_SUM_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum AdaptationError {
    #[error("invalid adaptation config: {0}")]
    InvalidConfig(String),
    #[error("cannot sample {requested} documents from a corpus of {available}")]
    CorpusTooSmall { requested: usize, available: usize },
    #[error("invalid probability distribution {0:?}")]
    InvalidDistribution(Vec<f64>),
    #[error("no reliable pseudo-labels to train on")]
    EmptyTrainingSet,
    #[error("training set line {line}: {reason}")]
    InvalidTrainingRecord { line: usize, reason: String },
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AdaptationError + '_ {
    move |source| AdaptationError::Io { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptationConfig {
    pub n_documents: usize,
    pub entropy_threshold: f64,
    pub n_classes: usize,
    pub rng_seed: u64,
    pub rounds: usize,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        Self { n_documents: 1200, entropy_threshold: 0.2, n_classes: 3, rng_seed: 0, rounds: 1 }
    }
}

impl AdaptationConfig {
    pub fn validate(&self) -> Result<(), AdaptationError> {
        if !(self.entropy_threshold > 0.0 && self.entropy_threshold <= 1.0) {
            return Err(AdaptationError::InvalidConfig(format!(
                "entropy_threshold must be in (0, 1], got {}",
                self.entropy_threshold
            )));
        }
        if self.n_classes < 2 {
            return Err(AdaptationError::InvalidConfig("n_classes must be at least 2".into()));
        }
        if self.n_documents == 0 || self.rounds == 0 {
            return Err(AdaptationError::InvalidConfig("n_documents and rounds must be positive".into()));
        }
        Ok(())
    }
}

/// Normalized Shannon entropy `-(1/ln M) Σ p ln p` with `M = p.len()` and
/// `0 ln 0 = 0`. Result lies in `[0, 1]`.
pub fn self_entropy(p: &[f64]) -> Result<f64, AdaptationError> {
    let sum: f64 = p.iter().sum();
    if p.len() < 2 || p.iter().any(|x| !x.is_finite() || *x < 0.0) || (sum - 1.0).abs() > ENTROPY_SUM_TOL {
        return Err(AdaptationError::InvalidDistribution(p.to_vec()));
    }
    let h = p.iter().filter(|&&x| x > 0.0).fold(0.0, |acc, &x| acc - x * x.ln());
    Ok((h / (p.len() as f64).ln()).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabel {
    pub sentence: Sentence,
    pub label: SentimentClass,
    pub score: SentenceScore,
    pub self_entropy: f64,
}

impl PseudoLabel {
    pub fn from_score(sentence: Sentence, score: SentenceScore) -> Result<Self, AdaptationError> {
        let self_entropy = self_entropy(&score.p.as_array())?;
        Ok(Self { sentence, label: score.p.argmax(), score, self_entropy })
    }
}

/// Indices of `n` documents drawn uniformly without replacement, ascending.
pub fn sample_documents(corpus_len: usize, n: usize, seed: u64, round: u64) -> Result<Vec<usize>, AdaptationError> {
    if n > corpus_len {
        return Err(AdaptationError::CorpusTooSmall { requested: n, available: corpus_len });
    }
    let mut rng = crate::seeded_rng(seed, round);
    let mut idx = rand::seq::index::sample(&mut rng, corpus_len, n).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Samples `config.n_documents` documents and pseudo-labels every sentence.
/// Documents without sentences contribute nothing.
pub fn generate_pseudo_labels(
    corpus: &[MdnaDocument],
    backend: &dyn ScoringBackend,
    config: &AdaptationConfig,
) -> Result<Vec<PseudoLabel>, AdaptationError> {
    generate_round(corpus, backend, config, 0)
}

fn generate_round(
    corpus: &[MdnaDocument],
    backend: &dyn ScoringBackend,
    config: &AdaptationConfig,
    round: u64,
) -> Result<Vec<PseudoLabel>, AdaptationError> {
    config.validate()?;
    let sample = sample_documents(corpus.len(), config.n_documents, config.rng_seed, round)?;
    let per_doc: Vec<Result<Vec<PseudoLabel>, AdaptationError>> = sample
        .par_iter()
        .map(|&i| {
            let doc = &corpus[i];
            if doc.sentences.is_empty() {
                return Ok(Vec::new());
            }
            let scores = score_document(doc, backend)?;
            doc.sentences.iter().cloned().zip(scores).map(|(s, sc)| PseudoLabel::from_score(s, sc)).collect()
        })
        .collect();
    let mut out = Vec::new();
    for labels in per_doc {
        out.extend(labels?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReliableSet {
    pub labels: Vec<PseudoLabel>,
    pub n_candidates: usize,
}

impl ReliableSet {
    pub fn retained_fraction(&self) -> f64 {
        if self.n_candidates == 0 {
            0.0
        } else {
            self.labels.len() as f64 / self.n_candidates as f64
        }
    }
}

/// Keeps labels with `self_entropy <= threshold`, in order.
pub fn filter_reliable(labels: &[PseudoLabel], threshold: f64) -> ReliableSet {
    ReliableSet {
        labels: labels.iter().filter(|l| l.self_entropy <= threshold).cloned().collect(),
        n_candidates: labels.len(),
    }
}

/// One line of the emitted training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingRecord {
    pub text: String,
    pub label: u8,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub positive: usize,
    pub negative: usize,
    pub neutral: usize,
}

impl ClassCounts {
    pub fn total(&self) -> usize {
        self.positive + self.negative + self.neutral
    }

    fn add(&mut self, class: SentimentClass) {
        match class {
            SentimentClass::Positive => self.positive += 1,
            SentimentClass::Negative => self.negative += 1,
            SentimentClass::Neutral => self.neutral += 1,
        }
    }
}

/// Shuffles the labels with `seed` and renders them as JSON lines.
pub fn training_set_jsonl(labels: &[PseudoLabel], seed: u64) -> Result<(String, ClassCounts), AdaptationError> {
    if labels.is_empty() {
        return Err(AdaptationError::EmptyTrainingSet);
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.shuffle(&mut crate::seeded_rng(seed, 0x7e7));
    let mut counts = ClassCounts::default();
    let mut out = String::new();
    for i in order {
        let l = &labels[i];
        counts.add(l.label);
        let rec = TrainingRecord { text: l.sentence.text.clone(), label: l.label.index() as u8 };
        out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        out.push('\n');
    }
    Ok((out, counts))
}

pub fn emit_training_set(
    labels: &[PseudoLabel],
    path: impl AsRef<Path>,
    seed: u64,
) -> Result<ClassCounts, AdaptationError> {
    let path = path.as_ref();
    let (text, counts) = training_set_jsonl(labels, seed)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut f = std::fs::File::create(path).map_err(io_err(path))?;
    f.write_all(text.as_bytes()).map_err(io_err(path))?;
    Ok(counts)
}

/// Parses a training set, checking labels are class indices.
pub fn parse_training_set(text: &str) -> Result<Vec<(String, SentimentClass)>, AdaptationError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| AdaptationError::InvalidTrainingRecord { line: i + 1, reason };
        let rec: TrainingRecord = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        let class = SentimentClass::from_index(rec.label as usize)
            .ok_or_else(|| bad(format!("label {} is not a class index", rec.label)))?;
        out.push((rec.text, class));
    }
    Ok(out)
}

/// Per-round counts written to the adaptation manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub round: usize,
    pub model_version_in: String,
    pub model_version_out: String,
    pub n_documents: usize,
    pub n_sentences: usize,
    pub n_reliable: usize,
    pub retained_fraction: f64,
    pub class_counts: ClassCounts,
    pub final_epoch_loss: Option<f64>,
    pub training_set: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationManifest {
    pub config: AdaptationConfig,
    pub fine_tune: Option<FineTuneParams>,
    pub rounds: Vec<RoundSummary>,
}

pub struct AdaptationOutcome {
    pub model: BagOfWordsBackend,
    pub manifest: AdaptationManifest,
    pub reports: Vec<TrainingReport>,
}

fn write_manifest(manifest: &AdaptationManifest, out_dir: &Path) -> Result<(), AdaptationError> {
    let path = out_dir.join("adaptation_manifest.json");
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(&path, json).map_err(io_err(&path))
}

/// Runs `config.rounds` self-training rounds on the local trainable
/// backend. When `out_dir` is set, each round's training set and the
/// manifest are written there.
pub fn run_adaptation(
    corpus: &[MdnaDocument],
    initial: &BagOfWordsBackend,
    config: &AdaptationConfig,
    params: &FineTuneParams,
    out_dir: Option<&Path>,
) -> Result<AdaptationOutcome, AdaptationError> {
    config.validate()?;
    let mut model = initial.clone();
    let mut rounds = Vec::new();
    let mut reports = Vec::new();
    for round in 0..config.rounds {
        let labels = generate_round(corpus, &model, config, round as u64)?;
        let reliable = filter_reliable(&labels, config.entropy_threshold);
        let seed = config.rng_seed.wrapping_add(round as u64);
        let (jsonl, class_counts) = training_set_jsonl(&reliable.labels, seed)?;
        let training_set = match out_dir {
            Some(dir) => {
                let path = dir.join(format!("training_set_round{round}.jsonl"));
                emit_training_set(&reliable.labels, &path, seed)?;
                Some(path)
            }
            None => None,
        };
        let examples = parse_training_set(&jsonl)?;
        let (tuned, report) = model.fine_tune(&examples, &FineTuneParams { seed, ..params.clone() })?;
        log::info!(
            "adaptation round {round}: {} of {} sentences kept ({:.2}%)",
            reliable.labels.len(),
            reliable.n_candidates,
            100.0 * reliable.retained_fraction()
        );
        rounds.push(RoundSummary {
            round,
            model_version_in: model.model_version().to_string(),
            model_version_out: tuned.model_version().to_string(),
            n_documents: config.n_documents,
            n_sentences: reliable.n_candidates,
            n_reliable: reliable.labels.len(),
            retained_fraction: reliable.retained_fraction(),
            class_counts,
            final_epoch_loss: report.epoch_mean_loss.last().copied(),
            training_set,
        });
        reports.push(report);
        model = tuned;
    }
    let manifest = AdaptationManifest { config: config.clone(), fine_tune: Some(params.clone()), rounds };
    if let Some(dir) = out_dir {
        write_manifest(&manifest, dir)?;
    }
    Ok(AdaptationOutcome { model, manifest, reports })
}

/// Same rounds against the remote service: pseudo-labels come from
/// `backend`, training runs as a service job. Returns the final model
/// version and the manifest.
pub fn run_service_adaptation(
    corpus: &[MdnaDocument],
    backend: &ServiceBackend,
    client: &ServiceClient,
    config: &AdaptationConfig,
    poll: Duration,
    timeout: Duration,
    out_dir: Option<&Path>,
) -> Result<(String, AdaptationManifest), AdaptationError> {
    config.validate()?;
    let mut current = backend.clone();
    let mut rounds = Vec::new();
    for round in 0..config.rounds {
        let labels = generate_round(corpus, &current, config, round as u64)?;
        let reliable = filter_reliable(&labels, config.entropy_threshold);
        let seed = config.rng_seed.wrapping_add(round as u64);
        let (jsonl, class_counts) = training_set_jsonl(&reliable.labels, seed)?;
        let job_id = client.submit_training(&TrainRequest::new(current.model_version(), jsonl))?;
        let job = client.wait_for_job(&job_id, poll, timeout)?;
        let version = job
            .model_version
            .ok_or_else(|| ScoringError::BackendRejected(format!("job {job_id} finished without a model_version")))?;
        rounds.push(RoundSummary {
            round,
            model_version_in: current.model_version().to_string(),
            model_version_out: version.clone(),
            n_documents: config.n_documents,
            n_sentences: reliable.n_candidates,
            n_reliable: reliable.labels.len(),
            retained_fraction: reliable.retained_fraction(),
            class_counts,
            final_epoch_loss: None,
            training_set: None,
        });
        current = current.with_model_version(&version);
    }
    let manifest = AdaptationManifest { config: config.clone(), fine_tune: None, rounds };
    if let Some(dir) = out_dir {
        write_manifest(&manifest, dir)?;
    }
    Ok((current.model_version().to_string(), manifest))
}
