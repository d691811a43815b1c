use std::collections::HashSet;
use std::path::Path;

use super::{CorpusError, Sentence};

const DEFAULT_ABBREVIATIONS: &str = include_str!("../../data/abbreviations.txt");

/// Tokens ending in a period that must not terminate a sentence
/// ("Inc.", "No.", "U.S."). Stored lowercase without the final period.
#[derive(Debug, Clone)]
pub struct Abbreviations {
    entries: HashSet<String>,
}

impl Default for Abbreviations {
    fn default() -> Self {
        Self::parse(DEFAULT_ABBREVIATIONS)
    }
}

impl Abbreviations {
    /// One abbreviation per line, with or without the trailing period.
    /// Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Self {
        let entries = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| l.trim_end_matches('.').to_lowercase())
            .filter(|l| !l.is_empty())
            .collect();
        Self { entries }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `token` is the whitespace-delimited word including its final period.
    fn guards(&self, token: &str) -> bool {
        let token = token.trim_start_matches(|c: char| OPENERS.contains(&c));
        let stem = token.strip_suffix('.').unwrap_or(token);
        if stem.is_empty() {
            return false;
        }
        let mut chars = stem.chars();
        // single-letter initials ("J.", "A.")
        if let (Some(c), None) = (chars.next(), chars.next()) {
            if c.is_alphabetic() {
                return true;
            }
        }
        self.entries.contains(&stem.to_lowercase())
    }
}

const TERMINALS: [char; 3] = ['.', '!', '?'];
const CLOSERS: [char; 6] = ['"', '\'', ')', ']', '\u{201d}', '\u{2019}'];
const OPENERS: [char; 6] = ['"', '\'', '(', '[', '\u{201c}', '\u{2018}'];

/// Words are maximal runs of alphabetic characters, uppercased. Digits and
/// punctuation never appear in tokens.
pub fn tokenize_words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphabetic())
        .filter(|t| !t.is_empty())
        .map(str::to_uppercase)
        .collect()
}

/// Same count as `tokenize_words(text).len()` without allocating.
pub fn count_words(text: &str) -> usize {
    text.split(|c: char| !c.is_alphabetic())
        .filter(|t| !t.is_empty())
        .count()
}

pub fn segment_sentences(doc_id: &str, text: &str) -> Vec<Sentence> {
    segment_sentences_with(doc_id, text, &Abbreviations::default())
}

/// Rule-based splitter: a sentence ends at a run of `.`/`!`/`?` (plus any
/// closing quotes or brackets) that is followed by whitespace and then a
/// character that is not lowercase. A period ending a guarded abbreviation
/// never splits. Newlines are ordinary whitespace, so every sentence is a
/// contiguous span of `text` and the spans cover all non-whitespace text.
pub fn segment_sentences_with(doc_id: &str, text: &str, abbrev: &Abbreviations) -> Vec<Sentence> {
    split_spans(text, abbrev)
        .into_iter()
        .enumerate()
        .map(|(index, span)| Sentence {
            doc_id: doc_id.to_string(),
            index,
            text: span.to_string(),
            word_count: count_words(span),
        })
        .collect()
}

fn split_spans<'a>(text: &'a str, abbrev: &Abbreviations) -> Vec<&'a str> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let n = chars.len();
    let byte_at = |i: usize| if i < n { chars[i].0 } else { text.len() };

    let mut spans = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < n {
        let c = chars[i].1;
        if !TERMINALS.contains(&c) {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j < n && TERMINALS.contains(&chars[j].1) {
            j += 1;
        }
        let bare_period = c == '.' && j == i + 1;
        while j < n && CLOSERS.contains(&chars[j].1) {
            j += 1;
        }
        if j >= n || !chars[j].1.is_whitespace() {
            i = j;
            continue;
        }
        let mut k = j;
        while k < n && chars[k].1.is_whitespace() {
            k += 1;
        }
        let split = if k >= n {
            true
        } else if chars[k].1.is_lowercase() {
            false
        } else if bare_period && j == i + 1 {
            let word_start = text[..byte_at(i)]
                .rfind(char::is_whitespace)
                .map(|p| p + text[p..].chars().next().map_or(1, char::len_utf8))
                .unwrap_or(0);
            !abbrev.guards(&text[word_start..byte_at(i) + 1])
        } else {
            true
        };
        if split {
            let piece = text[byte_at(start)..byte_at(j)].trim();
            if !piece.is_empty() {
                spans.push(piece);
            }
            start = j;
        }
        i = j;
    }
    if start < n {
        let piece = text[byte_at(start)..].trim();
        if !piece.is_empty() {
            spans.push(piece);
        }
    }
    spans
}
