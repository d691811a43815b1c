//! Target bodies shared by the libFuzzer binaries and the stable seed
//! replay test in distress-core. Each takes raw bytes and panics only on a
//! broken invariant.

#![allow(dead_code)]

use std::collections::HashSet;
use std::path::Path;

use chrono::NaiveDate;
use distress_core::adaptation::parse_training_set;
use distress_core::corpus::{
    count_words, extract_mdna, parse_index, read_documents_jsonl, segment_sentences, write_documents_jsonl, FormType,
    RawFiling,
};
use distress_core::features::read_financials;
use distress_core::lexicon::parse_word_list;
use distress_core::runner::ExperimentConfig;
use distress_core::scoring::{parse_cache_records, parse_score_response, SIMPLEX_TOL};

pub fn index_csv(data: &[u8]) {
    if let Ok(entries) = parse_index(data) {
        let mut ids = HashSet::new();
        assert!(entries.iter().all(|e| !e.filing_id.is_empty() && ids.insert(e.filing_id.clone())));
    }
}

pub fn filing_extract(data: &[u8]) {
    let filing = RawFiling {
        filing_id: "fz".into(),
        firm_id: "F".into(),
        fiscal_year: 2000,
        filing_date: NaiveDate::from_ymd_opt(2001, 3, 1).unwrap(),
        form_type: FormType::TenK,
        body: String::from_utf8_lossy(data).into_owned(),
    };
    if let Ok(doc) = extract_mdna(&filing) {
        assert!(!doc.sentences.is_empty());
        for (i, s) in doc.sentences.iter().enumerate() {
            assert_eq!(s.index, i);
            assert_eq!(s.doc_id, "fz");
            assert_eq!(s.word_count, count_words(&s.text));
        }
    }
}

fn squeeze(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

pub fn sentence_segmenter(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let sentences = segment_sentences("d", text);
    let joined: String = sentences.iter().map(|s| s.text.as_str()).collect();
    assert_eq!(squeeze(&joined), squeeze(text));
    assert!(sentences.iter().all(|s| !s.text.trim().is_empty()));
}

pub fn word_list(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(words) = parse_word_list(text) {
        let joined = words.iter().cloned().collect::<Vec<_>>().join("\n");
        assert_eq!(parse_word_list(&joined).unwrap(), words);
    }
}

pub fn score_cache(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(records) = parse_cache_records(text) {
        for r in records {
            let sum = r.p_pos + r.p_neg + r.p_neu;
            assert!(r.p_pos >= 0.0 && r.p_neg >= 0.0 && r.p_neu >= 0.0 && (sum - 1.0).abs() <= SIMPLEX_TOL);
        }
    }
}

/// First byte: expected row count; the rest is the response body.
pub fn score_response(data: &[u8]) {
    let Some((&n, body)) = data.split_first() else { return };
    let Ok(body) = std::str::from_utf8(body) else { return };
    if let Ok(rows) = parse_score_response(body, n as usize) {
        assert_eq!(rows.len(), n as usize);
        assert!(rows.iter().all(|r| r.len() == 3));
    }
}

pub fn training_set(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(records) = parse_training_set(text) {
        assert!(records.len() <= text.lines().count());
    }
}

pub fn documents_jsonl(data: &[u8]) {
    if let Ok(docs) = read_documents_jsonl(data) {
        let mut out = Vec::new();
        write_documents_jsonl(&docs, &mut out).unwrap();
        assert_eq!(read_documents_jsonl(out.as_slice()).unwrap(), docs);
    }
}

pub fn experiment_config(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::from_toml(text, Path::new("/base")) {
        assert!(cfg.corpus.index.is_absolute() && cfg.out_dir.is_absolute());
        let _ = cfg.validate();
    }
}

pub fn financials_csv(data: &[u8]) {
    let _ = read_financials(data);
}
