//! Sentence-level 3-class sentiment scoring and document aggregation.
//!
//! Class order is fixed everywhere: 0 = positive, 1 = negative, 2 = neutral.

mod bow;
mod cache;
mod client;
mod stub;

use std::borrow::Cow;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::MdnaDocument;

pub use bow::{BagOfWordsBackend, FineTuneParams, TrainingReport};
pub use cache::{parse_cache_records, score_corpus_cached, CacheRecord, CacheStats, ScoreCache};
pub use client::{parse_score_response, JobStatus, ModelCard, ServiceBackend, ServiceClient, TrainJob, TrainRequest};
#[cfg(test)]
pub(crate) use client::mock;
pub use stub::{stub_score, StubBackend, Temperature, NEUTRAL_PRIOR};

/// Tolerance for the simplex invariant of a stored score.
pub const SIMPLEX_TOL: f64 = 1e-9;
/// Looser tolerance applied to raw backend rows before renormalization.
pub const BACKEND_SUM_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("no sentence scores to aggregate")]
    EmptyScoreList,
    #[error("scores from several documents ({0} and {1}) in one aggregation")]
    MixedDocuments(String, String),
    #[error("document {0} has no sentences")]
    EmptyDocument(String),
    #[error("invalid probability triple {0:?}")]
    InvalidDistribution(Vec<f64>),
    #[error("temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),
    #[error("scoring backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("scoring backend response rejected: {0}")]
    BackendRejected(String),
    #[error("score cache line {line}: {reason}")]
    InvalidCache { line: usize, reason: String },
    #[error("training failed: {0}")]
    Training(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ScoringError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, ScoringError::BackendUnavailable(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum SentimentClass {
    Positive = 0,
    Negative = 1,
    Neutral = 2,
}

impl SentimentClass {
    pub const ALL: [SentimentClass; 3] = [SentimentClass::Positive, SentimentClass::Negative, SentimentClass::Neutral];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

/// A probability triple `(p_pos, p_neg, p_neu)` on the simplex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassProbs {
    pub pos: f64,
    pub neg: f64,
    pub neu: f64,
}

impl ClassProbs {
    /// Validates a triple against the simplex within [`SIMPLEX_TOL`].
    pub fn new(pos: f64, neg: f64, neu: f64) -> Result<Self, ScoringError> {
        let p = [pos, neg, neu];
        if p.iter().any(|x| !x.is_finite() || *x < 0.0) || (p.iter().sum::<f64>() - 1.0).abs() > SIMPLEX_TOL {
            return Err(ScoringError::InvalidDistribution(p.to_vec()));
        }
        Ok(Self { pos, neg, neu })
    }

    /// Accepts a raw backend row: exactly three finite, non-negative values
    /// summing to 1 within [`BACKEND_SUM_TOL`], then renormalizes exactly.
    pub fn from_backend_row(row: &[f64]) -> Result<Self, ScoringError> {
        if row.len() != 3 {
            return Err(ScoringError::BackendRejected(format!(
                "expected 3 class probabilities, got {}",
                row.len()
            )));
        }
        let sum: f64 = row.iter().sum();
        if row.iter().any(|x| !x.is_finite() || *x < 0.0) || (sum - 1.0).abs() > BACKEND_SUM_TOL {
            return Err(ScoringError::BackendRejected(format!("row {row:?} is not a probability distribution")));
        }
        Ok(Self { pos: row[0] / sum, neg: row[1] / sum, neu: row[2] / sum })
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.pos, self.neg, self.neu]
    }

    pub fn get(&self, class: SentimentClass) -> f64 {
        self.as_array()[class.index()]
    }

    /// Highest-probability class; ties go to the lowest class index.
    pub fn argmax(&self) -> SentimentClass {
        let p = self.as_array();
        let mut best = 0;
        for i in 1..3 {
            if p[i] > p[best] {
                best = i;
            }
        }
        SentimentClass::ALL[best]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceScore {
    pub doc_id: String,
    pub sent_index: usize,
    pub p: ClassProbs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentSentiment {
    pub doc_id: String,
    pub pos: f64,
    pub neg: f64,
    pub neu: f64,
    pub n_sentences: usize,
}

/// Sums the class probabilities over a document's sentences and divides by
/// the total mass.
pub fn aggregate_document(scores: &[SentenceScore]) -> Result<DocumentSentiment, ScoringError> {
    let first = scores.first().ok_or(ScoringError::EmptyScoreList)?;
    let mut sum = [0.0f64; 3];
    for s in scores {
        if s.doc_id != first.doc_id {
            return Err(ScoringError::MixedDocuments(first.doc_id.clone(), s.doc_id.clone()));
        }
        for (acc, v) in sum.iter_mut().zip(s.p.as_array()) {
            *acc += v;
        }
    }
    let mut doc = aggregate_class_sums(&first.doc_id, sum)?;
    doc.n_sentences = scores.len();
    Ok(doc)
}

/// Normalizes an already-summed class vector. `n_sentences` is left at 0.
pub fn aggregate_class_sums(doc_id: &str, sums: [f64; 3]) -> Result<DocumentSentiment, ScoringError> {
    let total: f64 = sums.iter().sum();
    if !(total.is_finite() && total > 0.0) || sums.iter().any(|x| *x < 0.0) {
        return Err(ScoringError::InvalidDistribution(sums.to_vec()));
    }
    Ok(DocumentSentiment {
        doc_id: doc_id.to_string(),
        pos: sums[0] / total,
        neg: sums[1] / total,
        neu: sums[2] / total,
        n_sentences: 0,
    })
}

/// A sentence scorer. Implementations must be deterministic: identical
/// input and model state give identical rows.
pub trait ScoringBackend: Send + Sync {
    fn name(&self) -> &str;
    fn model_version(&self) -> &str;
    fn max_sentence_tokens(&self) -> usize;
    /// One raw row per input sentence, in order.
    fn score_batch(&self, sentences: &[String]) -> Result<Vec<Vec<f64>>, ScoringError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreOptions {
    pub batch_size: usize,
    pub max_in_flight: usize,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        Self { batch_size: 64, max_in_flight: 1 }
    }
}

/// Keeps the first `max_tokens` whitespace-delimited tokens.
pub fn truncate_tokens(text: &str, max_tokens: usize) -> Cow<'_, str> {
    let mut tokens = text.split_whitespace();
    if tokens.clone().nth(max_tokens).is_none() {
        return Cow::Borrowed(text);
    }
    Cow::Owned(tokens.by_ref().take(max_tokens).collect::<Vec<_>>().join(" "))
}

pub fn score_document(doc: &MdnaDocument, backend: &dyn ScoringBackend) -> Result<Vec<SentenceScore>, ScoringError> {
    score_document_with(doc, backend, &ScoreOptions::default())
}

/// Scores every sentence of `doc`, batching requests and keeping at most
/// `max_in_flight` batches outstanding. Results come back in sentence order.
pub fn score_document_with(
    doc: &MdnaDocument,
    backend: &dyn ScoringBackend,
    opts: &ScoreOptions,
) -> Result<Vec<SentenceScore>, ScoringError> {
    if doc.sentences.is_empty() {
        return Err(ScoringError::EmptyDocument(doc.filing_id.clone()));
    }
    let max_tokens = backend.max_sentence_tokens();
    let texts: Vec<String> =
        doc.sentences.iter().map(|s| truncate_tokens(&s.text, max_tokens).into_owned()).collect();
    let batches: Vec<&[String]> = texts.chunks(opts.batch_size.max(1)).collect();

    let run = |batch: &[String]| -> Result<Vec<ClassProbs>, ScoringError> {
        let rows = backend.score_batch(batch)?;
        if rows.len() != batch.len() {
            return Err(ScoringError::BackendRejected(format!(
                "{} rows returned for {} sentences",
                rows.len(),
                batch.len()
            )));
        }
        rows.iter().map(|r| ClassProbs::from_backend_row(r)).collect()
    };

    let workers = opts.max_in_flight.max(1).min(batches.len());
    let per_batch: Vec<Result<Vec<ClassProbs>, ScoringError>> = if workers <= 1 {
        batches.iter().map(|b| run(b)).collect()
    } else {
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<Result<Vec<ClassProbs>, ScoringError>>>> =
            Mutex::new((0..batches.len()).map(|_| None).collect());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= batches.len() {
                        break;
                    }
                    let result = run(batches[i]);
                    slots.lock().unwrap()[i] = Some(result);
                });
            }
        });
        slots.into_inner().unwrap().into_iter().map(|s| s.expect("every batch ran")).collect()
    };

    let mut out = Vec::with_capacity(doc.sentences.len());
    for batch in per_batch {
        out.extend(batch?);
    }
    Ok(doc
        .sentences
        .iter()
        .zip(out)
        .map(|(s, p)| SentenceScore { doc_id: doc.filing_id.clone(), sent_index: s.index, p })
        .collect())
}
