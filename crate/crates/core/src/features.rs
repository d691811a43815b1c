//! Classifier-ready observations: financial ratios, the BRUPT label,
//! winsorization, standardization and sentiment columns.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("{firm_id}/{fiscal_year}: bankruptcy date {bankruptcy} precedes filing date {filing}")]
    InvalidDateOrder { firm_id: String, fiscal_year: i32, filing: NaiveDate, bankruptcy: NaiveDate },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("winsorization level must be in (0, 0.5), got {0}")]
    InvalidLevel(f64),
    #[error("{firm_id}/{fiscal_year}: {field} is not finite")]
    NonFiniteValue { firm_id: String, fiscal_year: i32, field: &'static str },
    #[error("{firm_id}/{fiscal_year}: no {kind} sentiment")]
    MissingSentiment { firm_id: String, fiscal_year: i32, kind: SentimentKind },
    #[error("{firm_id}/{fiscal_year}: {kind} sentiment ({pos}, {neg}) outside [0, 1]")]
    InvalidSentiment { firm_id: String, fiscal_year: i32, kind: SentimentKind, pos: f64, neg: f64 },
    #[error("duplicate record for {0}/{1}")]
    DuplicateRecord(String, i32),
    #[error("financial CSV row {row}: {reason}")]
    InvalidRecord { row: usize, reason: String },
    #[error("row width {got} does not match {expected} features")]
    WidthMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Financial variable names in column order.
pub const FIN_NAMES: [&str; 5] = ["WC", "RE", "EBIT", "MVE", "SALE"];

/// One firm-year of financial ratios. `ebit` is EBITDA over total assets;
/// the CSV accepts either `ebit` or `ebitda` as its column name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinancialRecord {
    pub firm_id: String,
    pub fiscal_year: i32,
    pub filing_date: NaiveDate,
    pub wc: f64,
    pub re: f64,
    #[serde(alias = "ebitda")]
    pub ebit: f64,
    pub mve: f64,
    pub sale: f64,
    #[serde(default)]
    pub bankruptcy_date: Option<NaiveDate>,
}

impl FinancialRecord {
    pub fn values(&self) -> [f64; 5] {
        [self.wc, self.re, self.ebit, self.mve, self.sale]
    }

    pub fn set_values(&mut self, v: [f64; 5]) {
        [self.wc, self.re, self.ebit, self.mve, self.sale] = v;
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        if let Some(i) = self.values().iter().position(|v| !v.is_finite()) {
            return Err(FeatureError::NonFiniteValue {
                firm_id: self.firm_id.clone(),
                fiscal_year: self.fiscal_year,
                field: FIN_NAMES[i],
            });
        }
        self.brupt().map(|_| ())
    }

    pub fn brupt(&self) -> Result<u8, FeatureError> {
        label_bankruptcy(self.filing_date, self.bankruptcy_date).map_err(|e| match e {
            FeatureError::InvalidDateOrder { filing, bankruptcy, .. } => FeatureError::InvalidDateOrder {
                firm_id: self.firm_id.clone(),
                fiscal_year: self.fiscal_year,
                filing,
                bankruptcy,
            },
            other => other,
        })
    }
}

/// 1 iff the bankruptcy falls 1 to 365 calendar days after the filing.
pub fn label_bankruptcy(filing: NaiveDate, bankruptcy: Option<NaiveDate>) -> Result<u8, FeatureError> {
    let Some(b) = bankruptcy else { return Ok(0) };
    if b < filing {
        return Err(FeatureError::InvalidDateOrder { firm_id: String::new(), fiscal_year: 0, filing, bankruptcy: b });
    }
    let days = (b - filing).num_days();
    Ok(u8::from(days > 0 && days <= 365))
}

/// Linear-interpolation quantile of sorted data (the `(n-1)q` rule).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Per-column clamp interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinsorBounds {
    pub level: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl WinsorBounds {
    /// Fits `level` and `1 - level` quantiles for each column of `rows`.
    pub fn fit(rows: &[Vec<f64>], level: f64) -> Result<Self, FeatureError> {
        if !(level > 0.0 && level < 0.5) {
            return Err(FeatureError::InvalidLevel(level));
        }
        if rows.len() < 2 {
            return Err(FeatureError::InsufficientData(format!("{} rows to fit winsor bounds", rows.len())));
        }
        let width = rows[0].len();
        let mut lower = Vec::with_capacity(width);
        let mut upper = Vec::with_capacity(width);
        for j in 0..width {
            let mut col: Vec<f64> = rows
                .iter()
                .map(|r| r.get(j).copied().ok_or(FeatureError::WidthMismatch { expected: width, got: r.len() }))
                .collect::<Result<_, _>>()?;
            col.sort_by(f64::total_cmp);
            lower.push(quantile_sorted(&col, level));
            upper.push(quantile_sorted(&col, 1.0 - level));
        }
        Ok(Self { level, lower, upper })
    }

    /// Clamps the leading `self.lower.len()` entries of `row`.
    pub fn apply_row(&self, row: &mut [f64]) {
        for ((v, lo), hi) in row.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }
}

pub fn fit_winsor(records: &[FinancialRecord], level: f64) -> Result<WinsorBounds, FeatureError> {
    let rows: Vec<Vec<f64>> = records.iter().map(|r| r.values().to_vec()).collect();
    WinsorBounds::fit(&rows, level)
}

pub fn apply_winsor(records: &[FinancialRecord], bounds: &WinsorBounds) -> Vec<FinancialRecord> {
    records
        .iter()
        .map(|r| {
            let mut v = r.values();
            bounds.apply_row(&mut v);
            let mut out = r.clone();
            out.set_values(v);
            out
        })
        .collect()
}

/// Z-score transform fit on a training matrix. Constant columns are dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub kept: Vec<usize>,
    pub names: Vec<String>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    /// Population mean and sd per column of `train`.
    pub fn fit(train: &[Vec<f64>], names: &[String]) -> Result<Self, FeatureError> {
        if train.is_empty() {
            return Err(FeatureError::InsufficientData("empty training matrix".into()));
        }
        let n = train.len() as f64;
        let mut out = Self { kept: Vec::new(), names: Vec::new(), mean: Vec::new(), sd: Vec::new() };
        for (j, name) in names.iter().enumerate() {
            let mean = train.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = train.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            if !(sd > 1e-12 * mean.abs().max(1.0)) {
                log::warn!("dropping constant feature {name}");
                continue;
            }
            out.kept.push(j);
            out.names.push(name.clone());
            out.mean.push(mean);
            out.sd.push(sd);
        }
        if out.kept.is_empty() {
            return Err(FeatureError::InsufficientData("every feature is constant".into()));
        }
        Ok(out)
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        self.kept.iter().enumerate().map(|(k, &j)| (row[j] - self.mean[k]) / self.sd[k]).collect()
    }

    pub fn transform(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.transform_row(r)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SentimentKind {
    #[serde(rename = "DICT")]
    Dict,
    #[serde(rename = "W2V")]
    W2v,
    #[serde(rename = "BERT")]
    Bert,
    #[serde(rename = "DAPT")]
    Dapt,
}

impl SentimentKind {
    pub fn prefix(self) -> &'static str {
        match self {
            SentimentKind::Dict => "DICT",
            SentimentKind::W2v => "W2V",
            SentimentKind::Bert => "BERT",
            SentimentKind::Dapt => "DAPT",
        }
    }
}

impl fmt::Display for SentimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.prefix())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum VariableSet {
    Fin,
    FinDict,
    FinW2v,
    FinBert,
    FinDapt,
}

impl VariableSet {
    pub const ALL: [VariableSet; 5] =
        [VariableSet::Fin, VariableSet::FinDict, VariableSet::FinW2v, VariableSet::FinBert, VariableSet::FinDapt];

    pub fn sentiment(self) -> Option<SentimentKind> {
        match self {
            VariableSet::Fin => None,
            VariableSet::FinDict => Some(SentimentKind::Dict),
            VariableSet::FinW2v => Some(SentimentKind::W2v),
            VariableSet::FinBert => Some(SentimentKind::Bert),
            VariableSet::FinDapt => Some(SentimentKind::Dapt),
        }
    }

    pub fn feature_names(self) -> Vec<String> {
        let mut names: Vec<String> = FIN_NAMES.iter().map(|s| s.to_string()).collect();
        if let Some(k) = self.sentiment() {
            names.push(format!("{}POS", k.prefix()));
            names.push(format!("{}NEG", k.prefix()));
        }
        names
    }
}

impl fmt::Display for VariableSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.sentiment() {
            None => f.write_str("FIN"),
            Some(k) => write!(f, "FIN+{}", k.prefix()),
        }
    }
}

impl FromStr for VariableSet {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        VariableSet::ALL
            .into_iter()
            .find(|v| v.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown variable set {s:?}"))
    }
}

impl TryFrom<String> for VariableSet {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<VariableSet> for String {
    fn from(v: VariableSet) -> String {
        v.to_string()
    }
}

/// `(pos, neg)` document sentiment per firm-year, for each sentiment source.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SentimentTables {
    tables: HashMap<SentimentKind, HashMap<(String, i32), (f64, f64)>>,
}

impl SentimentTables {
    pub fn insert(&mut self, kind: SentimentKind, firm_id: &str, fiscal_year: i32, pos: f64, neg: f64) {
        self.tables.entry(kind).or_default().insert((firm_id.to_string(), fiscal_year), (pos, neg));
    }

    pub fn get(&self, kind: SentimentKind, firm_id: &str, fiscal_year: i32) -> Option<(f64, f64)> {
        self.tables.get(&kind)?.get(&(firm_id.to_string(), fiscal_year)).copied()
    }

    pub fn has(&self, kind: SentimentKind) -> bool {
        self.tables.contains_key(&kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub firm_id: String,
    pub fiscal_year: i32,
    pub filing_date: NaiveDate,
    pub brupt: u8,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    pub variable_set: VariableSet,
    pub names: Vec<String>,
    pub observations: Vec<Observation>,
}

impl ObservationSet {
    pub fn matrix(&self) -> Vec<Vec<f64>> {
        self.observations.iter().map(|o| o.features.clone()).collect()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.observations.iter().map(|o| o.brupt).collect()
    }
}

/// Joins financial records with the sentiment required by `set` on
/// `(firm_id, fiscal_year)`. Output order follows `records`.
pub fn assemble(
    records: &[FinancialRecord],
    sentiments: &SentimentTables,
    set: VariableSet,
) -> Result<ObservationSet, FeatureError> {
    let mut seen = HashSet::new();
    let mut observations = Vec::with_capacity(records.len());
    for r in records {
        if !seen.insert((r.firm_id.as_str(), r.fiscal_year)) {
            return Err(FeatureError::DuplicateRecord(r.firm_id.clone(), r.fiscal_year));
        }
        r.validate()?;
        let mut features = r.values().to_vec();
        if let Some(kind) = set.sentiment() {
            let (pos, neg) = sentiments.get(kind, &r.firm_id, r.fiscal_year).ok_or_else(|| {
                FeatureError::MissingSentiment { firm_id: r.firm_id.clone(), fiscal_year: r.fiscal_year, kind }
            })?;
            if !(0.0..=1.0).contains(&pos) || !(0.0..=1.0).contains(&neg) {
                return Err(FeatureError::InvalidSentiment {
                    firm_id: r.firm_id.clone(),
                    fiscal_year: r.fiscal_year,
                    kind,
                    pos,
                    neg,
                });
            }
            features.extend([pos, neg]);
        }
        observations.push(Observation {
            firm_id: r.firm_id.clone(),
            fiscal_year: r.fiscal_year,
            filing_date: r.filing_date,
            brupt: r.brupt()?,
            features,
        });
    }
    Ok(ObservationSet { variable_set: set, names: set.feature_names(), observations })
}

/// Reads the financial CSV; every record is validated.
pub fn read_financials<R: Read>(reader: R) -> Result<Vec<FinancialRecord>, FeatureError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<FinancialRecord>().enumerate() {
        let rec = rec.map_err(|e| FeatureError::InvalidRecord { row: i + 1, reason: e.to_string() })?;
        rec.validate()?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_financials<W: Write>(records: &[FinancialRecord], writer: W) -> Result<(), FeatureError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `firm_id, fiscal_year, <features...>, brupt`.
pub fn write_observations<W: Write>(set: &ObservationSet, writer: W) -> Result<(), FeatureError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["firm_id".to_string(), "fiscal_year".to_string()];
    header.extend(set.names.iter().cloned());
    header.push("brupt".into());
    w.write_record(&header)?;
    for o in &set.observations {
        let mut row = vec![o.firm_id.clone(), o.fiscal_year.to_string()];
        row.extend(o.features.iter().map(|v| v.to_string()));
        row.push(o.brupt.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
