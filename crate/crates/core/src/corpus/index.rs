use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{CorpusError, FormType, MdnaDocument, RawFiling};

/// One row of the sidecar filing index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub filing_id: String,
    pub firm_id: String,
    pub fiscal_year: i32,
    pub filing_date: NaiveDate,
    pub form_type: String,
    pub path: PathBuf,
}

/// Parses the CSV index (`filing_id, firm_id, fiscal_year, filing_date,
/// form_type, path`). Filing ids must be nonempty and unique.
pub fn parse_index<R: Read>(reader: R) -> Result<Vec<IndexEntry>, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for (row, record) in rdr.deserialize::<IndexEntry>().enumerate() {
        let entry = record.map_err(|e| CorpusError::InvalidIndex { row: row + 1, reason: e.to_string() })?;
        if entry.filing_id.is_empty() {
            return Err(CorpusError::InvalidIndex { row: row + 1, reason: "empty filing_id".into() });
        }
        if !seen.insert(entry.filing_id.clone()) {
            return Err(CorpusError::DuplicateFilingId(entry.filing_id));
        }
        entries.push(entry);
    }
    Ok(entries)
}

/// Reads the index and every filing it references. Relative paths resolve
/// against the index file's directory.
pub fn load_corpus(index_path: impl AsRef<Path>) -> Result<Vec<RawFiling>, CorpusError> {
    let index_path = index_path.as_ref();
    let base = index_path.parent().unwrap_or_else(|| Path::new("."));
    let entries = parse_index(std::fs::File::open(index_path)?)?;
    entries
        .into_iter()
        .map(|e| {
            let path = if e.path.is_absolute() { e.path.clone() } else { base.join(&e.path) };
            let bytes = std::fs::read(&path)?;
            Ok(RawFiling {
                filing_id: e.filing_id,
                firm_id: e.firm_id,
                fiscal_year: e.fiscal_year,
                filing_date: e.filing_date,
                form_type: e.form_type.parse::<FormType>().unwrap_or(FormType::Other),
                body: String::from_utf8_lossy(&bytes).into_owned(),
            })
        })
        .collect()
}

pub fn write_documents_jsonl<W: Write>(docs: &[MdnaDocument], mut writer: W) -> Result<(), CorpusError> {
    for doc in docs {
        serde_json::to_writer(&mut writer, doc).map_err(std::io::Error::other)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_documents_jsonl<R: Read>(reader: R) -> Result<Vec<MdnaDocument>, CorpusError> {
    let mut docs = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc = serde_json::from_str(&line).map_err(|source| CorpusError::InvalidDocument { line: i + 1, source })?;
        docs.push(doc);
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;

    const INDEX: &str = "filing_id,firm_id,fiscal_year,filing_date,form_type,path\n\
        a1,F1,1996,1996-09-30,10-K,a1.txt\n\
        a2,F2,1997,1997-03-01,10KSB40,sub/a2.txt\n";

    #[test]
    fn parses_index() {
        let entries = parse_index(INDEX.as_bytes()).unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[1].form_type.parse::<FormType>().unwrap(), FormType::TenKsb40);
        assert_eq!(entries[0].filing_date, NaiveDate::from_ymd_opt(1996, 9, 30).unwrap());
    }

    #[test]
    fn rejects_duplicates_and_bad_dates() {
        let dup = format!("{INDEX}a1,F3,1998,1998-01-01,10-K,x.txt\n");
        assert!(matches!(parse_index(dup.as_bytes()), Err(CorpusError::DuplicateFilingId(id)) if id == "a1"));
        let bad = "filing_id,firm_id,fiscal_year,filing_date,form_type,path\na,F,1996,1996-02-30,10-K,a.txt\n";
        assert!(matches!(parse_index(bad.as_bytes()), Err(CorpusError::InvalidIndex { row: 1, .. })));
        let empty_id = "filing_id,firm_id,fiscal_year,filing_date,form_type,path\n,F,1996,1996-02-03,10-K,a.txt\n";
        assert!(parse_index(empty_id.as_bytes()).is_err());
    }

    #[test]
    fn loads_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("sub")).unwrap();
        std::fs::write(dir.path().join("a1.txt"), "body one").unwrap();
        std::fs::write(dir.path().join("sub/a2.txt"), "body two").unwrap();
        std::fs::write(dir.path().join("index.csv"), INDEX).unwrap();
        let filings = load_corpus(dir.path().join("index.csv")).unwrap();
        assert_eq!(filings[1].body, "body two");
        assert_eq!(filings[0].form_type, FormType::TenK);
    }

    #[test]
    fn document_stream_rejects_garbage() {
        let err = read_documents_jsonl("{\"nope\":1}\n".as_bytes()).unwrap_err();
        assert!(matches!(err, CorpusError::InvalidDocument { line: 1, .. }));
    }
}
