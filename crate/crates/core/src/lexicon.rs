//! Dictionary tone: share of positive and negative list words in a document.
//!
//! Matching is exact on uppercased word tokens. There is no stemming, no
//! negation handling and no multi-word phrase support.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{tokenize_words, MdnaDocument};

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("line {line}: {entry:?} is not a purely alphabetic word")]
    MalformedLexicon { line: usize, entry: String },
    #[error("words present in both lists: {}", .0.join(", "))]
    OverlappingLists(Vec<String>),
    #[error("document has no word tokens")]
    EmptyDocument,
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    Positive,
    Negative,
}

/// Parses one word list: one word per line, `#` lines are comments, blank
/// lines are skipped. Words are uppercased and deduplicated.
pub fn parse_word_list(text: &str) -> Result<BTreeSet<String>, LexiconError> {
    let mut words = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let entry = raw.trim();
        if entry.is_empty() || entry.starts_with('#') {
            continue;
        }
        if !entry.chars().all(char::is_alphabetic) {
            return Err(LexiconError::MalformedLexicon { line: i + 1, entry: entry.to_string() });
        }
        words.insert(entry.to_uppercase());
    }
    Ok(words)
}

pub fn load_word_list(path: impl AsRef<Path>) -> Result<BTreeSet<String>, LexiconError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| LexiconError::Io { path: path.display().to_string(), source })?;
    parse_word_list(&text)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    positive: BTreeSet<String>,
    negative: BTreeSet<String>,
}

impl Lexicon {
    /// Builds a lexicon from two lists. Entries are uppercased; any word in
    /// both lists is an error.
    pub fn new<I, J, S, T>(positive: I, negative: J) -> Result<Self, LexiconError>
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = T>,
        S: AsRef<str>,
        T: AsRef<str>,
    {
        let normalize = |w: &str, line: usize| {
            let w = w.trim();
            if w.is_empty() || !w.chars().all(char::is_alphabetic) {
                Err(LexiconError::MalformedLexicon { line, entry: w.to_string() })
            } else {
                Ok(w.to_uppercase())
            }
        };
        let positive = positive
            .into_iter()
            .enumerate()
            .map(|(i, w)| normalize(w.as_ref(), i + 1))
            .collect::<Result<BTreeSet<_>, _>>()?;
        let negative = negative
            .into_iter()
            .enumerate()
            .map(|(i, w)| normalize(w.as_ref(), i + 1))
            .collect::<Result<BTreeSet<_>, _>>()?;
        let overlap: Vec<String> = positive.intersection(&negative).cloned().collect();
        if !overlap.is_empty() {
            return Err(LexiconError::OverlappingLists(overlap));
        }
        Ok(Self { positive, negative })
    }

    pub fn load(positive: impl AsRef<Path>, negative: impl AsRef<Path>) -> Result<Self, LexiconError> {
        Self::new(load_word_list(positive)?, load_word_list(negative)?)
    }

    /// The small sample lexicon shipped with the crate.
    pub fn sample() -> Self {
        Self::new(
            parse_word_list(include_str!("../data/lexicon/positive.txt")).expect("bundled positive list"),
            parse_word_list(include_str!("../data/lexicon/negative.txt")).expect("bundled negative list"),
        )
        .expect("bundled lists are disjoint")
    }

    pub fn positive(&self) -> &BTreeSet<String> {
        &self.positive
    }

    pub fn negative(&self) -> &BTreeSet<String> {
        &self.negative
    }

    /// `token` must already be uppercase.
    pub fn polarity(&self, token: &str) -> Option<Polarity> {
        if self.positive.contains(token) {
            Some(Polarity::Positive)
        } else if self.negative.contains(token) {
            Some(Polarity::Negative)
        } else {
            None
        }
    }

    /// `(positive hits, negative hits, total words)` over the word tokens of `text`.
    pub fn count_hits(&self, text: &str) -> (usize, usize, usize) {
        let mut counts = (0, 0, 0);
        for token in tokenize_words(text) {
            counts.2 += 1;
            match self.polarity(&token) {
                Some(Polarity::Positive) => counts.0 += 1,
                Some(Polarity::Negative) => counts.1 += 1,
                None => {}
            }
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DictTone {
    pub dict_pos: f64,
    pub dict_neg: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub n_words: usize,
}

pub fn tone_of_text(text: &str, lex: &Lexicon) -> Result<DictTone, LexiconError> {
    let (n_pos, n_neg, n_words) = lex.count_hits(text);
    if n_words == 0 {
        return Err(LexiconError::EmptyDocument);
    }
    Ok(DictTone {
        dict_pos: n_pos as f64 / n_words as f64,
        dict_neg: n_neg as f64 / n_words as f64,
        n_pos,
        n_neg,
        n_words,
    })
}

pub fn compute_dict_tone(doc: &MdnaDocument, lex: &Lexicon) -> Result<DictTone, LexiconError> {
    tone_of_text(&doc.text, lex)
}
