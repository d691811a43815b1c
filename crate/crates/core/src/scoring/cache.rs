use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    aggregate_document, score_document_with, ClassProbs, DocumentSentiment, ScoreOptions, ScoringBackend,
    ScoringError, SentenceScore, SIMPLEX_TOL,
};
use crate::corpus::MdnaDocument;

/// One cached sentence score, keyed by backend name and model version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub doc_id: String,
    pub sent_index: usize,
    pub backend: String,
    pub model_version: String,
    pub p_pos: f64,
    pub p_neg: f64,
    pub p_neu: f64,
}

impl CacheRecord {
    pub fn probs(&self) -> Result<ClassProbs, ScoringError> {
        ClassProbs::new(self.p_pos, self.p_neg, self.p_neu)
    }
}

/// Parses a JSONL cache. Every record must hold a valid distribution.
pub fn parse_cache_records(text: &str) -> Result<Vec<CacheRecord>, ScoringError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: CacheRecord = serde_json::from_str(line)
            .map_err(|e| ScoringError::InvalidCache { line: i + 1, reason: e.to_string() })?;
        let p = [rec.p_pos, rec.p_neg, rec.p_neu];
        if p.iter().any(|x| !x.is_finite() || *x < 0.0) || (p.iter().sum::<f64>() - 1.0).abs() > SIMPLEX_TOL {
            return Err(ScoringError::InvalidCache { line: i + 1, reason: format!("{p:?} is not on the simplex") });
        }
        out.push(rec);
    }
    Ok(out)
}

type Key = (String, String, String, usize);

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: usize,
    pub misses: usize,
}

/// Sentence score cache, optionally persisted as append-only JSONL.
#[derive(Debug, Default)]
pub struct ScoreCache {
    path: Option<PathBuf>,
    entries: HashMap<Key, ClassProbs>,
    pending: Vec<CacheRecord>,
}

impl ScoreCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or starts) a cache file. Later records override earlier ones.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, ScoringError> {
        let path = path.as_ref().to_path_buf();
        let mut cache = Self { path: Some(path.clone()), ..Self::default() };
        if path.exists() {
            for rec in parse_cache_records(&std::fs::read_to_string(&path)?)? {
                let p = rec.probs()?;
                cache.entries.insert((rec.backend, rec.model_version, rec.doc_id, rec.sent_index), p);
            }
        }
        Ok(cache)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, backend: &str, model_version: &str, doc_id: &str, sent_index: usize) -> Option<ClassProbs> {
        self.entries.get(&(backend.to_string(), model_version.to_string(), doc_id.to_string(), sent_index)).copied()
    }

    pub fn insert(&mut self, rec: CacheRecord) -> Result<(), ScoringError> {
        let p = rec.probs()?;
        self.entries.insert((rec.backend.clone(), rec.model_version.clone(), rec.doc_id.clone(), rec.sent_index), p);
        self.pending.push(rec);
        Ok(())
    }

    /// Appends records inserted since the last flush to the backing file.
    pub fn flush(&mut self) -> Result<(), ScoringError> {
        let Some(path) = &self.path else {
            self.pending.clear();
            return Ok(());
        };
        if self.pending.is_empty() {
            return Ok(());
        }
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut w = BufWriter::new(OpenOptions::new().create(true).append(true).open(path)?);
        for rec in self.pending.drain(..) {
            serde_json::to_writer(&mut w, &rec).map_err(std::io::Error::other)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    fn lookup_document(&self, doc: &MdnaDocument, backend: &dyn ScoringBackend) -> Option<Vec<SentenceScore>> {
        doc.sentences
            .iter()
            .map(|s| {
                self.get(backend.name(), backend.model_version(), &doc.filing_id, s.index).map(|p| SentenceScore {
                    doc_id: doc.filing_id.clone(),
                    sent_index: s.index,
                    p,
                })
            })
            .collect()
    }
}

/// Scores and aggregates every document, reusing cached sentence scores.
/// A document is rescored as a whole unless all of its sentences are cached.
/// Output order follows `docs`.
pub fn score_corpus_cached(
    docs: &[MdnaDocument],
    backend: &dyn ScoringBackend,
    cache: &mut ScoreCache,
    opts: &ScoreOptions,
) -> Result<(Vec<DocumentSentiment>, CacheStats), ScoringError> {
    let shared: &ScoreCache = cache;
    let results: Vec<Result<(Vec<SentenceScore>, bool), ScoringError>> = docs
        .par_iter()
        .map(|doc| match shared.lookup_document(doc, backend) {
            Some(scores) if !scores.is_empty() => Ok((scores, true)),
            _ => score_document_with(doc, backend, opts).map(|s| (s, false)),
        })
        .collect();

    let mut stats = CacheStats::default();
    let mut out = Vec::with_capacity(docs.len());
    for result in results {
        let (scores, hit) = result?;
        if hit {
            stats.hits += scores.len();
        } else {
            stats.misses += scores.len();
            for s in &scores {
                cache.insert(CacheRecord {
                    doc_id: s.doc_id.clone(),
                    sent_index: s.sent_index,
                    backend: backend.name().to_string(),
                    model_version: backend.model_version().to_string(),
                    p_pos: s.p.pos,
                    p_neg: s.p.neg,
                    p_neu: s.p.neu,
                })?;
            }
        }
        out.push(aggregate_document(&scores)?);
    }
    cache.flush()?;
    Ok((out, stats))
}
