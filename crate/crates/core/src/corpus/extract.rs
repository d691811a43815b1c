use std::sync::LazyLock;

use rayon::prelude::*;
use regex::Regex;

use super::clean::{clean_region, html_to_lines};
use super::segment::{segment_sentences_with, Abbreviations};
use super::{CorpusError, MdnaDocument, RawFiling};

/// Line-anchored item heading: "Item 7.", "ITEM 7 -", "Part II, Item 7:".
static ITEM_HEADING: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^\s*(?:part\s+ii\s*[,.:\-\x{2013}\x{2014}]?\s*)?items?\s*(\d{1,2}[a-z]?)\b\s*[.:\-\x{2013}\x{2014}]*\s*(.*)$")
        .unwrap()
});
/// MD&A-indicative title text, including the trailing punctuation that
/// separates it from any body text on the same line.
static MDNA_TITLE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(concat!(
        r"(?i)^(?:",
        r"management\s*['\x{2019}`]?\s*s?\s+discussion(?:\s+and\s+analysis)?",
        r"(?:\s+of\s+(?:the\s+)?financial\s+condition(?:\s+and\s+(?:the\s+)?results\s+of\s+operations?)?)?",
        r"(?:\s+(?:and|or)\s+plan\s+of\s+operations?)?",
        r"|plan\s+of\s+operations?",
        r")[\s.:;,\-\x{2013}\x{2014}\x{2026}]*"
    ))
    .unwrap()
});
/// Fallback end marker when no later line starts with an item heading:
/// an inline "Item 8. Financial" style reference.
static INLINE_ITEM: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\b(?:ITEM|Item)\s+\d{1,2}[A-Za-z]?\s*[.:\-\x{2013}\x{2014}]+\s+\p{Lu}").unwrap()
});

#[derive(Debug, Clone, Copy)]
struct Heading {
    line: usize,
    /// Body text on the heading line starts at this byte offset.
    body_offset: usize,
    /// The title sat on the following line; body starts after it.
    title_on_next_line: bool,
}

fn mdna_heading_at(lines: &[String], idx: usize) -> Option<Heading> {
    let line = &lines[idx];
    let caps = ITEM_HEADING.captures(line)?;
    let number = caps.get(1)?.as_str().to_ascii_lowercase();
    if number != "6" && number != "7" {
        return None;
    }
    let rest = caps.get(2)?;
    if rest.as_str().trim().is_empty() {
        // "ITEM 7." alone on its line, title on the next non-blank line
        let next = lines[idx + 1..].iter().position(|l| !l.trim().is_empty())? + idx + 1;
        if MDNA_TITLE.is_match(lines[next].trim_start()) {
            return Some(Heading { line: next, body_offset: title_end(&lines[next]), title_on_next_line: true });
        }
        return None;
    }
    let m = MDNA_TITLE.find(rest.as_str())?;
    Some(Heading { line: idx, body_offset: rest.start() + m.end(), title_on_next_line: false })
}

fn title_end(line: &str) -> usize {
    let lead = line.len() - line.trim_start().len();
    MDNA_TITLE.find(line.trim_start()).map_or(line.len(), |m| lead + m.end())
}

fn is_item_heading(line: &str) -> bool {
    ITEM_HEADING.is_match(line)
}

fn find_last_heading(lines: &[String]) -> Option<Heading> {
    let mut last = None;
    let mut i = 0;
    while i < lines.len() {
        if let Some(h) = mdna_heading_at(lines, i) {
            last = Some(h);
            if h.title_on_next_line {
                i = h.line;
            }
        }
        i += 1;
    }
    last
}

pub fn extract_mdna(filing: &RawFiling) -> Result<MdnaDocument, CorpusError> {
    extract_mdna_with(filing, &Abbreviations::default())
}

/// Locates the MD&A section (the last qualifying Item 6 / Item 7 heading
/// wins; table-of-contents entries precede the real heading), cuts it at the
/// next item heading, cleans it and segments it into sentences.
pub fn extract_mdna_with(filing: &RawFiling, abbrev: &Abbreviations) -> Result<MdnaDocument, CorpusError> {
    if filing.body.trim().is_empty() {
        return Err(CorpusError::EmptyBody(filing.filing_id.clone()));
    }
    let lines = html_to_lines(&filing.body);
    let heading =
        find_last_heading(&lines).ok_or_else(|| CorpusError::NoMdnaFound(filing.filing_id.clone()))?;

    let mut region: Vec<String> = Vec::new();
    region.push(lines[heading.line][heading.body_offset..].to_string());
    let mut ended = false;
    for line in &lines[heading.line + 1..] {
        if is_item_heading(line) {
            ended = true;
            break;
        }
        region.push(line.clone());
    }
    if !ended {
        // no line-anchored end heading; fall back to an inline reference
        let joined = region.join("\n");
        if let Some(m) = INLINE_ITEM.find(&joined) {
            region = joined[..m.start()].lines().map(str::to_string).collect();
        }
    }

    let text = clean_region(&region).join("\n\n");
    let sentences = segment_sentences_with(&filing.filing_id, &text, abbrev);
    if sentences.is_empty() {
        return Err(CorpusError::EmptySection(filing.filing_id.clone()));
    }
    Ok(MdnaDocument {
        filing_id: filing.filing_id.clone(),
        firm_id: filing.firm_id.clone(),
        fiscal_year: filing.fiscal_year,
        filing_date: filing.filing_date,
        text,
        sentences,
    })
}

#[derive(Debug, Default)]
pub struct ExtractionOutcome {
    pub documents: Vec<MdnaDocument>,
    /// `(filing_id, reason)` for every filing that produced no document.
    pub failures: Vec<(String, String)>,
}

/// Extracts every filing in parallel; output order follows input order.
pub fn extract_corpus(filings: &[RawFiling], abbrev: &Abbreviations) -> ExtractionOutcome {
    let results: Vec<_> = filings.par_iter().map(|f| extract_mdna_with(f, abbrev)).collect();
    let mut outcome = ExtractionOutcome::default();
    for (filing, result) in filings.iter().zip(results) {
        match result {
            Ok(doc) => outcome.documents.push(doc),
            Err(e) => {
                log::warn!("extraction skipped {}: {e}", filing.filing_id);
                outcome.failures.push((filing.filing_id.clone(), e.to_string()));
            }
        }
    }
    outcome
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{contains_markup, FormType};
    use chrono::NaiveDate;

    fn filing(body: &str) -> RawFiling {
        RawFiling {
            filing_id: "f1".into(),
            firm_id: "firm".into(),
            fiscal_year: 1996,
            filing_date: NaiveDate::from_ymd_opt(1996, 9, 30).unwrap(),
            form_type: FormType::TenK,
            body: body.into(),
        }
    }

    #[test]
    fn single_line_html_filing() {
        let doc = extract_mdna(&filing(
            "<html>Item 7. Management's Discussion... strength in enrollments ... Item 8. Financial Statements",
        ))
        .unwrap();
        assert!(doc.text.contains("strength in enrollments"));
        assert!(!doc.text.contains("<html>"));
        assert!(!doc.text.contains("Financial Statements"));
    }

    #[test]
    fn missing_heading() {
        let err = extract_mdna(&filing("Item 1. Business\nWe sell things.\nItem 2. Properties")).unwrap_err();
        assert!(matches!(err, CorpusError::NoMdnaFound(_)));
    }

    #[test]
    fn empty_body_and_empty_section() {
        assert!(matches!(extract_mdna(&filing("  ")), Err(CorpusError::EmptyBody(_))));
        let err = extract_mdna(&filing("Item 7. Management's Discussion and Analysis\n12\nItem 8. Financial Statements"))
            .unwrap_err();
        assert!(matches!(err, CorpusError::EmptySection(_)));
    }

    #[test]
    fn table_of_contents_is_skipped() {
        let body = "\
TABLE OF CONTENTS
Item 1.  Business                                         3
Item 7.  Management's Discussion and Analysis            15
Item 8.  Financial Statements                            22

Item 1. Business
We operate training centers.

ITEM 7.
MANAGEMENT'S DISCUSSION AND ANALYSIS OF FINANCIAL CONDITION AND RESULTS OF OPERATIONS

Revenues rose. Costs fell.

15

ITEM 7A. QUANTITATIVE AND QUALITATIVE DISCLOSURES
None.";
        let doc = extract_mdna(&filing(body)).unwrap();
        assert_eq!(doc.text, "Revenues rose. Costs fell.");
        assert_eq!(doc.sentences.len(), 2);
    }

    #[test]
    fn item6_small_business_heading() {
        let body = "Item 6. Management's Discussion and Analysis or Plan of Operation\nSales grew.\nItem 7. Financial Statements\nx";
        let doc = extract_mdna(&filing(body)).unwrap();
        assert_eq!(doc.text, "Sales grew.");
    }

    #[test]
    fn item7_other_titles_do_not_qualify() {
        let body = "Item 7. Financial Statements and Supplementary Data\nNumbers.\nItem 8. Changes";
        assert!(matches!(extract_mdna(&filing(body)), Err(CorpusError::NoMdnaFound(_))));
    }

    #[test]
    fn html_heading_and_tables() {
        let body = "<p><b>Item&nbsp;7.</b> <b>Management&#8217;s Discussion and Analysis</b></p>\
            <p>Revenue grew.</p><table><tr><td>1,000</td></tr></table>\
            <p>Page 12</p><p>Margins held.</p><p>Item 8. Financial Statements</p>";
        let doc = extract_mdna(&filing(body)).unwrap();
        assert_eq!(doc.text, "Revenue grew.\n\nMargins held.");
        assert!(!contains_markup(&doc.text));
    }

    #[test]
    fn runs_to_end_without_end_heading() {
        let doc = extract_mdna(&filing("Item 7 - Management's Discussion and Analysis\nAll good here.")).unwrap();
        assert_eq!(doc.text, "All good here.");
    }

    #[test]
    fn corpus_extraction_records_failures() {
        let good = filing("Item 7. Management's Discussion and Analysis\nFine.\nItem 8. x");
        let mut bad = filing("nothing");
        bad.filing_id = "f2".into();
        let out = extract_corpus(&[good, bad], &Abbreviations::default());
        assert_eq!(out.documents.len(), 1);
        assert_eq!(out.failures.len(), 1);
        assert_eq!(out.failures[0].0, "f2");
    }
}
