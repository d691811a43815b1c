//! Filing ingestion: MD&A location, markup/table/page-number cleaning,
//! sentence segmentation and word tokenization.

mod clean;
mod extract;
mod index;
mod segment;

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use clean::{contains_markup, is_page_number_line, is_tabular_line};
pub use extract::{extract_corpus, extract_mdna, extract_mdna_with, ExtractionOutcome};
pub use index::{
    load_corpus, parse_index, read_documents_jsonl, write_documents_jsonl, IndexEntry,
};
pub use segment::{
    count_words, segment_sentences, segment_sentences_with, tokenize_words, Abbreviations,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("filing {0}: body is empty")]
    EmptyBody(String),
    #[error("filing {0}: no MD&A heading (Item 6 / Item 7) found")]
    NoMdnaFound(String),
    #[error("filing {0}: MD&A section has no sentences after cleaning")]
    EmptySection(String),
    #[error("filing index row {row}: {reason}")]
    InvalidIndex { row: usize, reason: String },
    #[error("duplicate filing id {0}")]
    DuplicateFilingId(String),
    #[error("document stream line {line}: {source}")]
    InvalidDocument {
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Annual-report form types. Anything unrecognized maps to `Other`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FormType {
    #[serde(rename = "10-K")]
    TenK,
    #[serde(rename = "10-KSB")]
    TenKsb,
    #[serde(rename = "10-K405")]
    TenK405,
    #[serde(rename = "10KSB40")]
    TenKsb40,
    #[serde(rename = "OTHER")]
    Other,
}

impl FormType {
    pub fn as_str(self) -> &'static str {
        match self {
            FormType::TenK => "10-K",
            FormType::TenKsb => "10-KSB",
            FormType::TenK405 => "10-K405",
            FormType::TenKsb40 => "10KSB40",
            FormType::Other => "OTHER",
        }
    }

    /// Whether the form is one of the annual-report types the pipeline inspects.
    pub fn is_annual_report(self) -> bool {
        self != FormType::Other
    }
}

impl FromStr for FormType {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim().to_ascii_uppercase().as_str() {
            "10-K" | "10K" => FormType::TenK,
            "10-KSB" | "10KSB" => FormType::TenKsb,
            "10-K405" | "10K405" => FormType::TenK405,
            "10KSB40" | "10-KSB40" => FormType::TenKsb40,
            _ => FormType::Other,
        })
    }
}

impl fmt::Display for FormType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawFiling {
    pub filing_id: String,
    pub firm_id: String,
    pub fiscal_year: i32,
    pub filing_date: NaiveDate,
    pub form_type: FormType,
    /// Raw text; may contain HTML markup, tables and page numbers.
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub doc_id: String,
    pub index: usize,
    pub text: String,
    pub word_count: usize,
}

/// A cleaned MD&A section. `doc_id` of every sentence equals `filing_id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdnaDocument {
    pub filing_id: String,
    pub firm_id: String,
    pub fiscal_year: i32,
    pub filing_date: NaiveDate,
    pub text: String,
    pub sentences: Vec<Sentence>,
}

impl MdnaDocument {
    pub fn doc_id(&self) -> &str {
        &self.filing_id
    }

    pub fn word_count(&self) -> usize {
        self.sentences.iter().map(|s| s.word_count).sum()
    }
}
