//! Desk-scale substitute for filing archives and accounting data.
//!
//! Each firm-year draws three independent standard-normal distress factors:
//! `z_fin` (seen through the ratios), `z_lex` (seen through lexicon-negative
//! sentences) and `z_dom` (seen through sentences built from domain distress
//! terms that no general lexicon lists). Bankruptcy within a year of the
//! filing has probability `logistic(a + b_fin z_fin + b_lex z_lex + b_dom z_dom)`
//! with `a` calibrated so the mean probability equals `base_rate`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use super::RunnerError;
use crate::classifiers::logistic;
use crate::corpus::{FormType, RawFiling};
use crate::features::{write_financials, FinancialRecord};
use crate::SeededRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_firms: usize,
    pub first_year: i32,
    pub last_year: i32,
    pub base_rate: f64,
    /// Log-odds of bankruptcy per unit of each distress factor.
    pub financial_effect: f64,
    pub lexicon_effect: f64,
    pub domain_effect: f64,
    /// Correlation between each ratio and `z_fin`.
    pub ratio_loading: f64,
    /// Log-rate change of distress sentences per unit of their factor.
    pub text_loading: f64,
    pub sentences_per_doc: usize,
    /// Baseline share of lexicon-negative, domain-negative and positive
    /// sentences; the rest are neutral.
    pub negative_share: f64,
    pub domain_share: f64,
    pub positive_share: f64,
    /// Probability that a lexicon-negative sentence also names a domain term.
    pub cooccurrence: f64,
    pub positive_words: Vec<String>,
    pub negative_words: Vec<String>,
    pub domain_words: Vec<String>,
    pub rng_seed: u64,
}

fn words(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_firms: 500,
            first_year: 2011,
            last_year: 2020,
            base_rate: 0.1,
            financial_effect: 1.0,
            lexicon_effect: 1.0,
            domain_effect: 1.8,
            ratio_loading: 0.6,
            text_loading: 0.9,
            sentences_per_doc: 24,
            negative_share: 0.12,
            domain_share: 0.12,
            positive_share: 0.15,
            cooccurrence: 0.8,
            positive_words: words(&[
                "strength", "strong", "expanded", "achieved", "profitability", "improved", "gains", "favorable",
                "successful", "record",
            ]),
            negative_words: words(&[
                "losses", "decline", "adverse", "default", "impairment", "litigation", "weakness", "deficit",
                "doubt", "delinquent", "unfavorable", "shortfall",
            ]),
            domain_words: words(&[
                "covenant", "forbearance", "waiver", "arrears", "delisting", "receivership", "curtailment",
                "insolvency", "dilutive", "distressed",
            ]),
            rng_seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), RunnerError> {
        let bad = |m: String| Err(RunnerError::InvalidSynthetic(m));
        if !(self.base_rate > 0.0 && self.base_rate < 1.0) {
            return bad(format!("base_rate {} outside (0, 1)", self.base_rate));
        }
        let effects = [self.financial_effect, self.lexicon_effect, self.domain_effect, self.text_loading];
        if effects.iter().any(|e| !e.is_finite()) {
            return bad("effect sizes must be finite".into());
        }
        if !(0.0..=1.0).contains(&self.ratio_loading) || !(0.0..=1.0).contains(&self.cooccurrence) {
            return bad("ratio_loading and cooccurrence must lie in [0, 1]".into());
        }
        let shares = [self.negative_share, self.domain_share, self.positive_share];
        if shares.iter().any(|s| !(*s >= 0.0)) || shares.iter().sum::<f64>() >= 1.0 {
            return bad("sentence shares must be nonnegative and sum below 1".into());
        }
        if self.n_firms == 0 || self.first_year > self.last_year || self.sentences_per_doc == 0 {
            return bad("need at least one firm, one year and one sentence".into());
        }
        if self.positive_words.len() < 3 || self.negative_words.len() < 3 || self.domain_words.len() < 2 {
            return bad("need at least 3 positive, 3 negative and 2 domain words".into());
        }
        Ok(())
    }

    /// The generative equations, written to the manifest.
    pub fn equations(&self) -> Vec<String> {
        vec![
            "z_fin, z_lex, z_dom ~ N(0, 1) independently per firm-year".into(),
            format!(
                "P(BRUPT = 1) = logistic(a + {} z_fin + {} z_lex + {} z_dom), a chosen so mean P = {}",
                self.financial_effect, self.lexicon_effect, self.domain_effect, self.base_rate
            ),
            format!(
                "ratio_k = mu_k + sd_k (s_k {r} z_fin + sqrt(1 - {r}^2) t4), s = (-, -, -, -, +) for (WC, RE, EBIT, MVE, SALE)",
                r = self.ratio_loading
            ),
            format!(
                "sentence type weights: lexicon-neg {} exp({t} z_lex), domain-neg {} exp({t} z_dom), positive {} exp(-{t} z_lex / 2), neutral 1 - sum of base shares",
                self.negative_share, self.domain_share, self.positive_share, t = self.text_loading
            ),
            format!("a lexicon-negative sentence names a domain term with probability {}", self.cooccurrence),
            "bankruptcy date = filing date + U{1..365} days; the firm then exits and a new firm takes its slot".into(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticManifest {
    pub spec: SyntheticSpec,
    pub equations: Vec<String>,
    pub intercept: f64,
    pub n_filings: usize,
    pub n_bankrupt: usize,
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub filings: Vec<RawFiling>,
    pub financials: Vec<FinancialRecord>,
    pub manifest: SyntheticManifest,
}

const RATIO_MEAN: [f64; 5] = [0.15, 0.05, 0.08, 1.2, 1.1];
const RATIO_SD: [f64; 5] = [0.12, 0.3, 0.1, 0.8, 0.5];
const RATIO_SIGN: [f64; 5] = [-1.0, -1.0, -1.0, -1.0, 1.0];

const NEUTRAL: &[&str] = &[
    "Revenue for the year was recognized in accordance with the policies described in the notes.",
    "The Company operates through two reportable segments serving commercial customers.",
    "Selling and administrative expenses were consistent with the prior year as a share of revenue.",
    "Capital expenditures were funded from operating cash flows and the existing credit facility.",
    "The Company continues to evaluate new accounting pronouncements and their effect on reporting.",
    "Inventory levels were managed in line with expected customer demand.",
    "Interest expense reflects the average balance outstanding under the credit agreement.",
    "The effective tax rate differs from the statutory rate because of state taxes and credits.",
    "Management reviews segment results on a monthly basis.",
    "The Company purchased equipment for its distribution centers during the year.",
];

/// Shared by positive and negative sentences, so only the filled words
/// carry the tone.
const TONE_FRAMES: &[&str] = &[
    "The Company reported {0} and {1} during the year as {2} conditions persisted across its markets.",
    "Results reflected {0} in the core segment, {1} in receivables and {2} pressure on margins.",
    "Management noted {0}, {1} and {2} developments affecting operations in the period.",
];

const DOMAIN_FRAMES: &[&str] = &[
    "Discussions with lenders regarding the {0} and a possible {1} continued after year end.",
    "The Company entered into a {0} agreement and disclosed a {1} notice from its lenders.",
    "The board considered {0} alternatives following the {1} of certain obligations.",
];

fn fill(frame: &str, words: &[&String]) -> String {
    let mut s = frame.to_string();
    for (i, w) in words.iter().enumerate() {
        s = s.replace(&format!("{{{i}}}"), w);
    }
    s
}

fn pick<'a>(rng: &mut SeededRng, pool: &'a [String], n: usize) -> Vec<&'a String> {
    pool.choose_multiple(rng, n).collect()
}

enum Kind {
    LexNeg,
    DomNeg,
    Pos,
    Neutral,
}

fn sentence(kind: Kind, spec: &SyntheticSpec, rng: &mut SeededRng) -> String {
    match kind {
        Kind::LexNeg => {
            let frame = TONE_FRAMES.choose(rng).unwrap();
            let mut s = fill(frame, &pick(rng, &spec.negative_words, 3));
            if rng.random_bool(spec.cooccurrence) {
                let term = spec.domain_words.choose(rng).unwrap();
                s.pop();
                let _ = write!(s, ", including a {term} matter.");
            }
            s
        }
        Kind::DomNeg => fill(DOMAIN_FRAMES.choose(rng).unwrap(), &pick(rng, &spec.domain_words, 2)),
        Kind::Pos => fill(TONE_FRAMES.choose(rng).unwrap(), &pick(rng, &spec.positive_words, 3)),
        Kind::Neutral => NEUTRAL.choose(rng).unwrap().to_string(),
    }
}

fn mdna_sentences(spec: &SyntheticSpec, z_lex: f64, z_dom: f64, rng: &mut SeededRng) -> Vec<String> {
    let t = spec.text_loading;
    let w = [
        spec.negative_share * (t * z_lex).exp(),
        spec.domain_share * (t * z_dom).exp(),
        spec.positive_share * (-0.5 * t * z_lex).exp(),
        1.0 - spec.negative_share - spec.domain_share - spec.positive_share,
    ];
    let total: f64 = w.iter().sum();
    (0..spec.sentences_per_doc)
        .map(|_| {
            let mut u = rng.random::<f64>() * total;
            let mut k = 3;
            for (i, wi) in w.iter().enumerate() {
                if u < *wi {
                    k = i;
                    break;
                }
                u -= wi;
            }
            let kind = [Kind::LexNeg, Kind::DomNeg, Kind::Pos, Kind::Neutral].into_iter().nth(k).unwrap();
            sentence(kind, spec, rng)
        })
        .collect()
}

fn filing_body(firm: &str, year: i32, sentences: &[String], rng: &mut SeededRng) -> String {
    let page = rng.random_range(10..40);
    let mut b = String::new();
    let _ = write!(
        b,
        "<html><head><title>{firm} 10-K {year}</title><style>td {{ padding: 2px; }}</style></head><body>\n\
         <p>UNITED STATES SECURITIES AND EXCHANGE COMMISSION</p>\n<p>FORM 10-K</p>\n\
         <p>Annual report for the fiscal year ended December 31, {year}</p>\n\
         <table><tr><td>Item 1.</td><td>Business</td><td>3</td></tr>\
         <tr><td>Item 7.</td><td>Management&#8217;s Discussion and Analysis</td><td>{page}</td></tr>\
         <tr><td>Item 8.</td><td>Financial Statements</td><td>{}</td></tr></table>\n\
         <p>Item 1. Business</p>\n<p>{firm} designs and distributes industrial products.</p>\n\
         <p>Item 7. Management&#8217;s Discussion and Analysis of Financial Condition and Results of Operations</p>\n",
        page + 9
    );
    for (i, chunk) in sentences.chunks(4).enumerate() {
        let _ = writeln!(b, "<p>{}</p>", chunk.join(" "));
        if i == 1 {
            let _ = writeln!(
                b,
                "<table><tr><td>Net sales</td><td>{}</td><td>{}</td></tr></table>",
                rng.random_range(100..999),
                rng.random_range(100..999)
            );
            let _ = writeln!(b, "<pre>\nNet sales      1,{:03}     1,{:03}     1,{:03}\n</pre>", i, i + 1, i + 2);
        }
        if i == 3 {
            let _ = writeln!(b, "<p>{}</p>", page + 1);
        }
    }
    b.push_str("<p>Item 8. Financial Statements and Supplementary Data</p>\n<p>See the index to the financial statements.</p>\n</body></html>\n");
    b
}

/// Mean of `logistic(a + s_i)` is increasing in `a`; bisection to `target`.
fn calibrate_intercept(scores: &[f64], target: f64) -> f64 {
    let mean = |a: f64| scores.iter().map(|s| logistic(a + s)).sum::<f64>() / scores.len() as f64;
    let (mut lo, mut hi) = (-40.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

struct Draw {
    slot: usize,
    year: i32,
    z: [f64; 3],
}

/// Generates filings and financial records in memory. Identical specs give
/// identical output.
pub fn synthesize(spec: &SyntheticSpec) -> Result<SyntheticData, RunnerError> {
    spec.validate()?;
    let years = spec.first_year..=spec.last_year;
    let mut factor_rng = crate::seeded_rng(spec.rng_seed, 1);
    let draws: Vec<Draw> = years
        .clone()
        .flat_map(|year| (0..spec.n_firms).map(move |slot| (slot, year)))
        .map(|(slot, year)| Draw { slot, year, z: std::array::from_fn(|_| StandardNormal.sample(&mut factor_rng)) })
        .collect();
    let effects = [spec.financial_effect, spec.lexicon_effect, spec.domain_effect];
    let scores: Vec<f64> = draws.iter().map(|d| d.z.iter().zip(effects).map(|(z, e)| z * e).sum()).collect();
    let intercept = calibrate_intercept(&scores, spec.base_rate);

    let mut rng = crate::seeded_rng(spec.rng_seed, 2);
    let t4 = StudentT::new(4.0).expect("valid dof");
    let r = spec.ratio_loading;
    let mut generation = vec![0usize; spec.n_firms];
    let mut filings = Vec::with_capacity(draws.len());
    let mut financials = Vec::with_capacity(draws.len());
    for (d, score) in draws.iter().zip(&scores) {
        let firm_id = match generation[d.slot] {
            0 => format!("F{:04}", d.slot),
            g => format!("F{:04}-{g}", d.slot),
        };
        let filing_date = NaiveDate::from_ymd_opt(d.year + 1, rng.random_range(2..=3), rng.random_range(1..=28))
            .expect("valid date");
        let bankrupt = rng.random_bool(logistic(intercept + score));
        let bankruptcy_date = bankrupt.then(|| filing_date + Duration::days(rng.random_range(1..=365)));
        let values: [f64; 5] = std::array::from_fn(|k| {
            let noise: f64 = t4.sample(&mut rng);
            RATIO_MEAN[k] + RATIO_SD[k] * (RATIO_SIGN[k] * r * d.z[0] + (1.0 - r * r).sqrt() * noise)
        });
        let sentences = mdna_sentences(spec, d.z[1], d.z[2], &mut rng);
        let form_type = match rng.random_range(0..10) {
            0 => FormType::TenKsb,
            1 => FormType::TenK405,
            _ => FormType::TenK,
        };
        filings.push(RawFiling {
            filing_id: format!("{firm_id}-{}", d.year),
            firm_id: firm_id.clone(),
            fiscal_year: d.year,
            filing_date,
            form_type,
            body: filing_body(&firm_id, d.year, &sentences, &mut rng),
        });
        let mut rec = FinancialRecord {
            firm_id,
            fiscal_year: d.year,
            filing_date,
            wc: 0.0,
            re: 0.0,
            ebit: 0.0,
            mve: 0.0,
            sale: 0.0,
            bankruptcy_date,
        };
        rec.set_values(values);
        financials.push(rec);
        if bankrupt {
            generation[d.slot] += 1;
        }
    }
    let n_bankrupt = financials.iter().filter(|f| f.bankruptcy_date.is_some()).count();
    let manifest = SyntheticManifest {
        spec: spec.clone(),
        equations: spec.equations(),
        intercept,
        n_filings: filings.len(),
        n_bankrupt,
    };
    Ok(SyntheticData { filings, financials, manifest })
}

/// Paths written by [`generate_synthetic`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOutput {
    pub index: PathBuf,
    pub financials: PathBuf,
    pub positive_words: PathBuf,
    pub negative_words: PathBuf,
    pub manifest: PathBuf,
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), RunnerError> {
    std::fs::write(path, contents).map_err(|source| RunnerError::Io { path: path.into(), source })
}

/// Writes `filings/*.htm`, `index.csv`, `financials.csv`, the word lists
/// under `lexicon/` and `synthetic_manifest.json` into `dir`.
pub fn generate_synthetic(spec: &SyntheticSpec, dir: &Path) -> Result<(SyntheticOutput, SyntheticManifest), RunnerError> {
    let data = synthesize(spec)?;
    for sub in ["filings", "lexicon"] {
        let p = dir.join(sub);
        std::fs::create_dir_all(&p).map_err(|source| RunnerError::Io { path: p, source })?;
    }
    let mut index = csv::Writer::from_writer(Vec::new());
    index.write_record(["filing_id", "firm_id", "fiscal_year", "filing_date", "form_type", "path"])?;
    for f in &data.filings {
        let rel = format!("filings/{}.htm", f.filing_id);
        write_file(&dir.join(&rel), &f.body)?;
        index.write_record([
            f.filing_id.as_str(),
            &f.firm_id,
            &f.fiscal_year.to_string(),
            &f.filing_date.to_string(),
            f.form_type.as_str(),
            &rel,
        ])?;
    }
    let out = SyntheticOutput {
        index: dir.join("index.csv"),
        financials: dir.join("financials.csv"),
        positive_words: dir.join("lexicon/positive.txt"),
        negative_words: dir.join("lexicon/negative.txt"),
        manifest: dir.join("synthetic_manifest.json"),
    };
    write_file(&out.index, index.into_inner().map_err(|e| RunnerError::InvalidSynthetic(e.to_string()))?)?;
    let mut fin = Vec::new();
    write_financials(&data.financials, &mut fin)?;
    write_file(&out.financials, fin)?;
    write_file(&out.positive_words, spec.positive_words.join("\n") + "\n")?;
    write_file(&out.negative_words, spec.negative_words.join("\n") + "\n")?;
    write_file(&out.manifest, serde_json::to_string_pretty(&data.manifest).expect("manifest serializes"))?;
    Ok((out, data.manifest))
}
