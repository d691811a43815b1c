use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::chart::render_svg;
use super::config::{BackendConfig, ExperimentConfig, SweepMode};
use super::RunnerError;
use crate::adaptation::{run_adaptation, run_service_adaptation, AdaptationManifest};
use crate::classifiers::{fit, ClassifierKind, FittedModel};
use crate::corpus::{
    extract_corpus, load_corpus, read_documents_jsonl, write_documents_jsonl, Abbreviations, MdnaDocument,
};
use crate::evaluation::{
    hyperparameter_sweep, knn_k_grid, nagelkerke_r2, pseudo_r2, svm_c_grid, time_based_resample, ConfusionCounts,
    MetricReport, RepetitionResult, Split, SweepData, SweepRecord,
};
use crate::features::{
    assemble, read_financials, write_observations, FeatureError, ObservationSet, SentimentKind, SentimentTables,
    Standardizer, VariableSet, WinsorBounds,
};
use crate::lexicon::{compute_dict_tone, Lexicon};
use crate::scoring::{
    score_corpus_cached, BagOfWordsBackend, ScoreCache, ScoreOptions, ScoringBackend, ServiceBackend, ServiceClient,
    StubBackend,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Extract,
    Tone,
    Score,
    Adapt,
    Features,
    Evaluate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] =
        [Stage::Extract, Stage::Tone, Stage::Score, Stage::Adapt, Stage::Features, Stage::Evaluate, Stage::Report];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Extract => "extract",
            Stage::Tone => "tone",
            Stage::Score => "score",
            Stage::Adapt => "adapt",
            Stage::Features => "features",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Stage::ALL.into_iter().find(|st| st.name().eq_ignore_ascii_case(s.trim())).ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: Stage,
    pub seconds: f64,
    pub cache_hits: usize,
    pub cache_misses: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStatus {
    pub variable_set: VariableSet,
    pub classifier: ClassifierKind,
    pub ok: bool,
    pub failed_repetitions: usize,
    pub error: Option<String>,
}

/// Everything about a run that is not part of the report itself.
/// Timestamps and timings live only here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub started_at: String,
    pub config_hash: String,
    pub rng_seed: u64,
    pub crate_version: String,
    pub documents_key: Option<String>,
    pub n_documents: usize,
    pub extraction_failures: usize,
    /// Model version per sentiment slot.
    pub model_versions: BTreeMap<String, String>,
    pub adaptation: Option<AdaptationManifest>,
    pub stages: Vec<StageTiming>,
    pub cells: Vec<CellStatus>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: MetricReport,
    pub manifest: RunManifest,
}

impl RunOutcome {
    pub fn failed_cells(&self) -> usize {
        self.manifest.cells.iter().filter(|c| !c.ok).count()
    }
}

#[derive(Serialize, Deserialize)]
struct AdaptedModel {
    model: Option<BagOfWordsBackend>,
    model_version: String,
    manifest: AdaptationManifest,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> RunnerError + '_ {
    move |source| RunnerError::Io { path: path.to_path_buf(), source }
}

fn content_key(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(&h.finalize()[..8])
}

fn kind_file(kind: SentimentKind) -> String {
    format!("sentiment_{}.csv", kind.prefix())
}

fn set_slug(set: VariableSet) -> String {
    set.to_string().to_ascii_lowercase().replace('+', "_")
}

/// `firm_id, fiscal_year, pos, neg` rows. Floats use the shortest
/// round-trip form, so reading back gives identical values.
pub fn write_sentiment_csv(path: &Path, rows: &[(String, i32, f64, f64)]) -> Result<(), RunnerError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["firm_id", "fiscal_year", "pos", "neg"])?;
    for (firm, year, pos, neg) in rows {
        w.write_record([firm.clone(), year.to_string(), pos.to_string(), neg.to_string()])?;
    }
    w.flush().map_err(io(path))
}

pub fn read_sentiment_csv(path: &Path) -> Result<Vec<(String, i32, f64, f64)>, RunnerError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.deserialize::<(String, i32, f64, f64)>() {
        rows.push(rec?);
    }
    Ok(rows)
}

/// Stage driver. Each stage reads its inputs from the output directory (or
/// from memory when an earlier stage ran in the same process) and writes
/// its outputs there.
pub struct Pipeline {
    cfg: ExperimentConfig,
    manifest: RunManifest,
    docs: Option<Arc<Vec<MdnaDocument>>>,
    lexicon: Option<Lexicon>,
}

impl Pipeline {
    pub fn new(cfg: ExperimentConfig) -> Result<Self, RunnerError> {
        let cache = cfg.out_dir.join("cache");
        std::fs::create_dir_all(&cache).map_err(io(&cache))?;
        let manifest = RunManifest {
            started_at: chrono::Utc::now().to_rfc3339(),
            config_hash: cfg.hash(),
            rng_seed: cfg.rng_seed,
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            documents_key: None,
            n_documents: 0,
            extraction_failures: 0,
            model_versions: BTreeMap::new(),
            adaptation: None,
            stages: Vec::new(),
            cells: Vec::new(),
        };
        Ok(Self { cfg, manifest, docs: None, lexicon: None })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    fn out(&self, name: &str) -> PathBuf {
        self.cfg.out_dir.join(name)
    }

    fn wants(&self, kind: SentimentKind) -> bool {
        self.cfg.variable_sets.iter().any(|v| v.sentiment() == Some(kind))
    }

    fn record(&mut self, stage: Stage, start: Instant, hits: usize, misses: usize, error: Option<String>) {
        let seconds = start.elapsed().as_secs_f64();
        log::info!("stage {stage}: {seconds:.2}s, cache {hits} hits / {misses} misses");
        self.manifest.stages.push(StageTiming { stage, seconds, cache_hits: hits, cache_misses: misses, error });
    }

    pub fn run_stage(&mut self, stage: Stage) -> Result<(), RunnerError> {
        match stage {
            Stage::Extract => self.extract(),
            Stage::Tone => self.tone(),
            Stage::Score => self.score(),
            Stage::Adapt => self.adapt(),
            Stage::Features => self.features().map(|_| ()),
            Stage::Evaluate => self.evaluate().map(|_| ()),
            Stage::Report => self.report().map(|_| ()),
        }
    }

    fn lexicon(&mut self) -> Result<Lexicon, RunnerError> {
        if self.lexicon.is_none() {
            self.lexicon = Some(match &self.cfg.lexicon {
                Some(p) => Lexicon::load(&p.positive, &p.negative)?,
                None => Lexicon::sample(),
            });
        }
        Ok(self.lexicon.clone().expect("just set"))
    }

    fn lexicon_key(&mut self) -> Result<String, RunnerError> {
        let lex = self.lexicon()?;
        let pos = lex.positive().iter().cloned().collect::<Vec<_>>().join("\n");
        let neg = lex.negative().iter().cloned().collect::<Vec<_>>().join("\n");
        Ok(content_key(&[pos.as_bytes(), neg.as_bytes()]))
    }

    fn set_documents(&mut self, docs: Vec<MdnaDocument>, bytes: &[u8]) {
        self.manifest.documents_key = Some(content_key(&[bytes]));
        self.manifest.n_documents = docs.len();
        self.docs = Some(Arc::new(docs));
    }

    fn documents(&mut self, stage: &'static str) -> Result<Arc<Vec<MdnaDocument>>, RunnerError> {
        if self.docs.is_none() {
            let path = self.out("documents.jsonl");
            if !path.exists() {
                return Err(RunnerError::MissingInput { stage, missing: path.display().to_string() });
            }
            let bytes = std::fs::read(&path).map_err(io(&path))?;
            let docs = read_documents_jsonl(bytes.as_slice())?;
            self.set_documents(docs, &bytes);
        }
        Ok(self.docs.clone().expect("just set"))
    }

    fn documents_key(&mut self, stage: &'static str) -> Result<String, RunnerError> {
        self.documents(stage)?;
        Ok(self.manifest.documents_key.clone().expect("set with documents"))
    }

    /// Filings to cleaned MD&A documents, cached by the content of the
    /// index, every filing body and the abbreviation list.
    pub fn extract(&mut self) -> Result<(), RunnerError> {
        let start = Instant::now();
        let index = &self.cfg.corpus.index;
        let index_bytes = std::fs::read(index).map_err(io(index))?;
        let filings = load_corpus(index)?;
        let (abbrev, abbrev_bytes) = match &self.cfg.corpus.abbreviations {
            Some(p) => (Abbreviations::load(p)?, std::fs::read(p).map_err(io(p))?),
            None => (Abbreviations::default(), Vec::new()),
        };
        let mut parts: Vec<&[u8]> = vec![&index_bytes, &abbrev_bytes];
        parts.extend(filings.iter().map(|f| f.body.as_bytes()));
        let cache = self.out(&format!("cache/documents-{}.jsonl", content_key(&parts)));
        let hit = cache.exists();
        if !hit {
            let outcome = extract_corpus(&filings, &abbrev);
            for (id, reason) in &outcome.failures {
                log::warn!("filing {id}: {reason}");
            }
            self.manifest.extraction_failures = outcome.failures.len();
            let mut buf = Vec::new();
            write_documents_jsonl(&outcome.documents, &mut buf)?;
            std::fs::write(&cache, &buf).map_err(io(&cache))?;
        } else {
            self.manifest.extraction_failures = filings.len().saturating_sub(
                std::fs::read_to_string(&cache).map_err(io(&cache))?.lines().filter(|l| !l.trim().is_empty()).count(),
            );
        }
        let bytes = std::fs::read(&cache).map_err(io(&cache))?;
        let out = self.out("documents.jsonl");
        std::fs::write(&out, &bytes).map_err(io(&out))?;
        let docs = read_documents_jsonl(bytes.as_slice())?;
        self.set_documents(docs, &bytes);
        self.record(Stage::Extract, start, usize::from(hit), usize::from(!hit), None);
        Ok(())
    }

    fn doc_rows(docs: &[MdnaDocument], values: impl Iterator<Item = (String, f64, f64)>) -> Vec<(String, i32, f64, f64)> {
        let by_id: HashMap<&str, &MdnaDocument> = docs.iter().map(|d| (d.filing_id.as_str(), d)).collect();
        values
            .map(|(id, pos, neg)| {
                let d = by_id[id.as_str()];
                (d.firm_id.clone(), d.fiscal_year, pos, neg)
            })
            .collect()
    }

    /// Dictionary tone per document.
    pub fn tone(&mut self) -> Result<(), RunnerError> {
        let start = Instant::now();
        let docs = self.documents("tone")?;
        let lex = self.lexicon()?;
        let tones = docs
            .par_iter()
            .map(|d| compute_dict_tone(d, &lex).map(|t| (d.filing_id.clone(), t.dict_pos, t.dict_neg)))
            .collect::<Result<Vec<_>, _>>()?;
        let rows = Self::doc_rows(&docs, tones.into_iter());
        write_sentiment_csv(&self.out(&kind_file(SentimentKind::Dict)), &rows)?;
        self.record(Stage::Tone, start, 0, 0, None);
        Ok(())
    }

    fn service(&self, version: &str) -> Option<ServiceBackend> {
        match &self.cfg.backend {
            BackendConfig::Service { url, timeout_secs, retries, .. } => Some(
                ServiceBackend::new(url, version)
                    .with_timeout(Duration::from_secs(*timeout_secs))
                    .with_retries(*retries, Duration::from_millis(500)),
            ),
            _ => None,
        }
    }

    fn slot_backend(&mut self, kind: SentimentKind) -> Result<Box<dyn ScoringBackend>, RunnerError> {
        let lex = self.lexicon()?;
        let unavailable = || RunnerError::InvalidConfig(format!("the backend does not provide {kind} scores"));
        Ok(match (&self.cfg.backend, kind) {
            (BackendConfig::Stub { temperature, .. }, SentimentKind::Bert) => {
                Box::new(StubBackend::new(lex, *temperature)?)
            }
            (BackendConfig::Stub { w2v_temperature: Some(t), .. }, SentimentKind::W2v) => {
                Box::new(StubBackend::new(lex, *t)?)
            }
            (BackendConfig::Service { model_version, .. }, SentimentKind::Bert) => {
                Box::new(self.service(model_version).expect("service backend"))
            }
            (BackendConfig::Service { w2v_model_version: Some(v), .. }, SentimentKind::W2v) => {
                Box::new(self.service(v).expect("service backend").with_max_sentence_tokens(50))
            }
            _ => return Err(unavailable()),
        })
    }

    fn score_with(&mut self, kind: SentimentKind, backend: &dyn ScoringBackend) -> Result<(usize, usize), RunnerError> {
        let docs = self.documents("score")?;
        let key = format!("{}-{}", self.documents_key("score")?, self.lexicon_key()?);
        let mut cache = ScoreCache::open(self.out(&format!("cache/scores-{key}.jsonl")))?;
        let (sentiments, stats) = score_corpus_cached(&docs, backend, &mut cache, &ScoreOptions::default())?;
        cache.flush()?;
        let rows = Self::doc_rows(&docs, sentiments.into_iter().map(|s| (s.doc_id, s.pos, s.neg)));
        write_sentiment_csv(&self.out(&kind_file(kind)), &rows)?;
        self.manifest.model_versions.insert(kind.prefix().to_string(), backend.model_version().to_string());
        Ok((stats.hits, stats.misses))
    }

    /// Backend scores for the W2V and BERT slots that the variable sets use.
    pub fn score(&mut self) -> Result<(), RunnerError> {
        let start = Instant::now();
        let (mut hits, mut misses) = (0, 0);
        let mut result = Ok(());
        let kinds: Vec<SentimentKind> =
            [SentimentKind::W2v, SentimentKind::Bert].into_iter().filter(|k| self.wants(*k)).collect();
        for kind in kinds {
            let _ = std::fs::remove_file(self.out(&kind_file(kind)));
            let r = self.slot_backend(kind).and_then(|b| self.score_with(kind, b.as_ref()));
            match r {
                Ok((h, m)) => {
                    hits += h;
                    misses += m;
                }
                Err(e) => {
                    log::error!("scoring {kind}: {e}");
                    result = Err(e);
                }
            }
        }
        let err = result.as_ref().err().map(|e| e.to_string());
        self.record(Stage::Score, start, hits, misses, err);
        result
    }

    fn adapted_model(&mut self) -> Result<(AdaptedModel, bool), RunnerError> {
        let docs = self.documents("adapt")?;
        let adaptation = serde_json::to_vec(&self.cfg.adaptation).expect("config serializes");
        let fine_tune = serde_json::to_vec(&self.cfg.fine_tune).expect("config serializes");
        let backend_cfg = serde_json::to_vec(&self.cfg.backend).expect("config serializes");
        let key = content_key(&[
            self.documents_key("adapt")?.as_bytes(),
            self.lexicon_key()?.as_bytes(),
            &backend_cfg,
            &adaptation,
            &fine_tune,
        ]);
        let path = self.out(&format!("cache/adapted-{key}.json"));
        if path.exists() {
            let text = std::fs::read_to_string(&path).map_err(io(&path))?;
            if let Ok(cached) = serde_json::from_str::<AdaptedModel>(&text) {
                return Ok((cached, true));
            }
            log::warn!("{}: unreadable, retraining", path.display());
        }
        let dir = self.out("adaptation");
        std::fs::create_dir_all(&dir).map_err(io(&dir))?;
        let adapted = match self.cfg.backend.clone() {
            BackendConfig::Stub { temperature, .. } => {
                let stub = StubBackend::new(self.lexicon()?, temperature)?;
                let outcome = run_adaptation(
                    &docs,
                    &BagOfWordsBackend::from_stub(&stub),
                    &self.cfg.adaptation,
                    &self.cfg.fine_tune,
                    Some(&dir),
                )?;
                AdaptedModel {
                    model_version: outcome.model.model_version().to_string(),
                    model: Some(outcome.model),
                    manifest: outcome.manifest,
                }
            }
            BackendConfig::Service { url, model_version, poll_secs, train_timeout_secs, .. } => {
                let backend = self.service(&model_version).expect("service backend");
                let (version, manifest) = run_service_adaptation(
                    &docs,
                    &backend,
                    &ServiceClient::new(&url),
                    &self.cfg.adaptation,
                    Duration::from_secs(poll_secs),
                    Duration::from_secs(train_timeout_secs),
                    Some(&dir),
                )?;
                AdaptedModel { model: None, model_version: version, manifest }
            }
            BackendConfig::None => {
                return Err(RunnerError::InvalidConfig("domain adaptation needs a scoring backend".into()))
            }
        };
        std::fs::write(&path, serde_json::to_string(&adapted).expect("model serializes")).map_err(io(&path))?;
        Ok((adapted, false))
    }

    /// One or more self-training rounds, then DAPT-slot scores from the
    /// adapted model.
    pub fn adapt(&mut self) -> Result<(), RunnerError> {
        let start = Instant::now();
        let _ = std::fs::remove_file(self.out(&kind_file(SentimentKind::Dapt)));
        let result = self.adapt_inner();
        let (hits, misses) = *result.as_ref().unwrap_or(&(0, 0));
        self.record(Stage::Adapt, start, hits, misses, result.as_ref().err().map(|e| e.to_string()));
        result.map(|_| ())
    }

    fn adapt_inner(&mut self) -> Result<(usize, usize), RunnerError> {
        if let BackendConfig::Service { dapt_model_version: Some(v), .. } = &self.cfg.backend {
            let backend = self.service(&v.clone()).expect("service backend");
            return self.score_with(SentimentKind::Dapt, &backend);
        }
        let (adapted, hit) = self.adapted_model()?;
        let dir = self.out("adaptation");
        std::fs::create_dir_all(&dir).map_err(io(&dir))?;
        let manifest_path = dir.join("adaptation_manifest.json");
        std::fs::write(&manifest_path, serde_json::to_string_pretty(&adapted.manifest).expect("manifest serializes"))
            .map_err(io(&manifest_path))?;
        self.manifest.adaptation = Some(adapted.manifest.clone());
        let (h, m) = match &adapted.model {
            Some(model) => self.score_with(SentimentKind::Dapt, model)?,
            None => {
                let backend = self.service(&adapted.model_version).expect("service backend");
                self.score_with(SentimentKind::Dapt, &backend)?
            }
        };
        Ok((h + usize::from(hit), m + usize::from(!hit)))
    }

    fn sentiment_tables(&self) -> Result<SentimentTables, RunnerError> {
        let mut tables = SentimentTables::default();
        for kind in [SentimentKind::Dict, SentimentKind::W2v, SentimentKind::Bert, SentimentKind::Dapt] {
            let path = self.out(&kind_file(kind));
            if path.exists() {
                for (firm, year, pos, neg) in read_sentiment_csv(&path)? {
                    tables.insert(kind, &firm, year, pos, neg);
                }
            }
        }
        Ok(tables)
    }

    /// Joins financials with the available sentiment for every requested
    /// variable set. Only firm-years with an extracted MD&A are kept when
    /// documents exist. A set whose sentiment is missing fails on its own.
    pub fn features(&mut self) -> Result<Vec<(VariableSet, Result<ObservationSet, String>)>, RunnerError> {
        let start = Instant::now();
        let path = &self.cfg.corpus.financials;
        let mut records = read_financials(std::fs::File::open(path).map_err(io(path))?)?;
        if self.docs.is_some() || self.out("documents.jsonl").exists() {
            let docs = self.documents("features")?;
            let have: HashSet<(&str, i32)> = docs.iter().map(|d| (d.firm_id.as_str(), d.fiscal_year)).collect();
            records.retain(|r| have.contains(&(r.firm_id.as_str(), r.fiscal_year)));
        }
        let tables = self.sentiment_tables()?;
        let dir = self.out("features");
        std::fs::create_dir_all(&dir).map_err(io(&dir))?;
        let mut out = Vec::new();
        for &set in &self.cfg.variable_sets {
            match assemble(&records, &tables, set) {
                Ok(obs) => {
                    let p = dir.join(format!("{}.csv", set_slug(set)));
                    write_observations(&obs, std::fs::File::create(&p).map_err(io(&p))?)?;
                    out.push((set, Ok(obs)));
                }
                Err(e) => {
                    log::error!("{set}: {e}");
                    out.push((set, Err(e.to_string())));
                }
            }
        }
        self.record(Stage::Features, start, 0, 0, None);
        Ok(out)
    }

    fn hyper_grid(&self, kind: ClassifierKind) -> Vec<f64> {
        match kind {
            ClassifierKind::Knn => self.cfg.hyper.knn_grid.clone().unwrap_or_else(knn_k_grid),
            ClassifierKind::Svm => self.cfg.hyper.svm_grid.clone().unwrap_or_else(svm_c_grid),
            ClassifierKind::Hazard => Vec::new(),
        }
    }

    fn fixed_hyper(&self, kind: ClassifierKind) -> Option<f64> {
        match kind {
            ClassifierKind::Knn => Some(self.cfg.hyper.knn_k as f64),
            ClassifierKind::Svm => Some(self.cfg.hyper.svm_c),
            ClassifierKind::Hazard => None,
        }
    }

    /// All requested cells over every repetition of the split plan. Writes
    /// `report.json`, `table2.csv` and `figure.svg`.
    pub fn evaluate(&mut self) -> Result<MetricReport, RunnerError> {
        let sets = self.features()?;
        let start = Instant::now();
        let ok: Vec<(VariableSet, &ObservationSet)> =
            sets.iter().filter_map(|(s, r)| r.as_ref().ok().map(|o| (*s, o))).collect();
        let Some((_, base)) = ok.first() else {
            self.manifest.cells = self.failed_cells(&sets);
            return Err(RunnerError::NoUsableCells);
        };
        let splits = time_based_resample(&base.observations, &self.cfg.split)?;
        let labels = base.labels();
        let level = self.cfg.winsor_level;
        let kinds = self.cfg.classifiers.clone();

        let mut sweeps = Vec::new();
        let mut hyper: HashMap<(VariableSet, ClassifierKind), Option<f64>> = HashMap::new();
        for &(set, obs) in &ok {
            for &kind in &kinds {
                hyper.insert((set, kind), self.fixed_hyper(kind));
                if kind == ClassifierKind::Hazard || self.cfg.hyper.sweep == SweepMode::Off {
                    continue;
                }
                let split = &splits[0];
                let Ok(x) = prepare(obs, &split.train, level) else { continue };
                let rows = |idx: &[usize]| idx.iter().map(|&i| x.0[i].clone()).collect::<Vec<_>>();
                let ys = |idx: &[usize]| idx.iter().map(|&i| labels[i]).collect::<Vec<_>>();
                let (tx, ty, vx, vy) = (rows(&split.train), ys(&split.train), rows(&split.val), ys(&split.val));
                let data = SweepData { train_x: &tx, train_y: &ty, val_x: &vx, val_y: &vy, names: &x.1 };
                match hyperparameter_sweep(kind, &self.hyper_grid(kind), &data) {
                    Ok(sweep) => {
                        if self.cfg.hyper.sweep == SweepMode::Select && sweep.best.is_some() {
                            hyper.insert((set, kind), sweep.best);
                        }
                        sweeps.push(SweepRecord { variable_set: set, sweep });
                    }
                    Err(e) => log::warn!("{set} {kind} sweep: {e}"),
                }
            }
        }

        let results: Vec<RepetitionResult> = splits
            .par_iter()
            .flat_map_iter(|split| {
                let mut out = Vec::new();
                for &(set, obs) in &ok {
                    let prepared = prepare(obs, &split.train, level);
                    for &kind in &kinds {
                        let h = hyper[&(set, kind)];
                        out.push(match &prepared {
                            Ok(x) => run_cell(set, kind, x, &labels, split, h),
                            Err(e) => failed(split.repetition, set, kind, h, e.to_string()),
                        });
                    }
                }
                out
            })
            .collect();

        let report = MetricReport::from_repetitions(results, sweeps);
        let mut cells = self.failed_cells(&sets);
        for row in &report.rows {
            let first_error = report
                .repetitions
                .iter()
                .find(|r| r.variable_set == row.variable_set && r.classifier == row.classifier && r.error.is_some())
                .and_then(|r| r.error.clone());
            cells.push(CellStatus {
                variable_set: row.variable_set,
                classifier: row.classifier,
                ok: row.n_ok > 0,
                failed_repetitions: row.n_failed,
                error: first_error,
            });
        }
        cells.sort_by_key(|c| (c.classifier, c.variable_set));
        self.manifest.cells = cells;
        self.write_report(&report)?;
        self.record(Stage::Evaluate, start, 0, 0, None);
        Ok(report)
    }

    fn failed_cells(&self, sets: &[(VariableSet, Result<ObservationSet, String>)]) -> Vec<CellStatus> {
        sets.iter()
            .filter_map(|(s, r)| r.as_ref().err().map(|e| (*s, e)))
            .flat_map(|(set, e)| {
                self.cfg.classifiers.iter().map(move |&classifier| CellStatus {
                    variable_set: set,
                    classifier,
                    ok: false,
                    failed_repetitions: 0,
                    error: Some(e.clone()),
                })
            })
            .collect()
    }

    fn write_report(&self, report: &MetricReport) -> Result<(), RunnerError> {
        let json = self.out("report.json");
        std::fs::write(&json, report.to_json()).map_err(io(&json))?;
        let csv = self.out("table2.csv");
        std::fs::write(&csv, report.to_csv_string()?).map_err(io(&csv))?;
        let svg = self.out("figure.svg");
        std::fs::write(&svg, render_svg(report)).map_err(io(&svg))?;
        Ok(())
    }

    /// Re-renders `table2.csv` and `figure.svg` from `report.json`.
    pub fn report(&mut self) -> Result<MetricReport, RunnerError> {
        let start = Instant::now();
        let path = self.out("report.json");
        if !path.exists() {
            return Err(RunnerError::MissingInput { stage: "report", missing: path.display().to_string() });
        }
        let text = std::fs::read_to_string(&path).map_err(io(&path))?;
        let report: MetricReport = serde_json::from_str(&text)
            .map_err(|e| RunnerError::InvalidConfig(format!("{}: {e}", path.display())))?;
        self.write_report(&report)?;
        self.record(Stage::Report, start, 0, 0, None);
        Ok(report)
    }

    pub fn write_manifest(&self) -> Result<PathBuf, RunnerError> {
        let path = self.out("run_manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&self.manifest).expect("manifest serializes"))
            .map_err(io(&path))?;
        Ok(path)
    }
}

/// Winsorizes and standardizes with bounds fitted on the training rows.
fn prepare(obs: &ObservationSet, train: &[usize], level: f64) -> Result<(Vec<Vec<f64>>, Vec<String>), FeatureError> {
    let mut x = obs.matrix();
    let rows = |x: &[Vec<f64>]| train.iter().map(|&i| x[i].clone()).collect::<Vec<_>>();
    if level > 0.0 {
        let bounds = WinsorBounds::fit(&rows(&x), level)?;
        x.iter_mut().for_each(|r| bounds.apply_row(r));
    }
    let st = Standardizer::fit(&rows(&x), &obs.names)?;
    Ok((st.transform(&x), st.names))
}

fn failed(repetition: usize, set: VariableSet, kind: ClassifierKind, h: Option<f64>, e: String) -> RepetitionResult {
    RepetitionResult {
        repetition,
        variable_set: set,
        classifier: kind,
        hyperparameter: h,
        a1: None,
        a2: None,
        cox_snell: None,
        nagelkerke: None,
        error: Some(e),
    }
}

fn run_cell(
    set: VariableSet,
    kind: ClassifierKind,
    (x, names): &(Vec<Vec<f64>>, Vec<String>),
    labels: &[u8],
    split: &Split,
    h: Option<f64>,
) -> RepetitionResult {
    let pick = |idx: &[usize]| (idx.iter().map(|&i| x[i].clone()).collect::<Vec<_>>(), idx.iter().map(|&i| labels[i]).collect::<Vec<_>>());
    let (tx, ty) = pick(&split.train);
    let (sx, sy) = pick(&split.test);
    let outcome = (|| -> Result<RepetitionResult, String> {
        let model = fit(kind, &tx, &ty, names, h).map_err(|e| e.to_string())?;
        let pred = model.predict_all(&sx).map_err(|e| e.to_string())?;
        let (a1, a2) = ConfusionCounts::from_predictions(&sy, &pred).accuracy().map_err(|e| e.to_string())?;
        let (cox_snell, nagelkerke) = match &model {
            FittedModel::Hazard(m) => (
                pseudo_r2(m.log_lik_fit, m.log_lik_null, m.n).ok(),
                nagelkerke_r2(m.log_lik_fit, m.log_lik_null, m.n).ok(),
            ),
            _ => (None, None),
        };
        Ok(RepetitionResult {
            repetition: split.repetition,
            variable_set: set,
            classifier: kind,
            hyperparameter: h,
            a1: Some(a1),
            a2: Some(a2),
            cox_snell,
            nagelkerke,
            error: None,
        })
    })();
    outcome.unwrap_or_else(|e| failed(split.repetition, set, kind, h, e))
}

/// Runs every stage the config needs. Scoring and adaptation failures are
/// recorded and only fail the cells that depend on them.
pub fn run(cfg: ExperimentConfig) -> Result<RunOutcome, RunnerError> {
    let mut p = Pipeline::new(cfg)?;
    p.extract()?;
    for kind in [SentimentKind::Dict, SentimentKind::W2v, SentimentKind::Bert, SentimentKind::Dapt] {
        if !p.wants(kind) {
            let _ = std::fs::remove_file(p.out(&kind_file(kind)));
        }
    }
    if p.wants(SentimentKind::Dict) {
        p.tone()?;
    }
    if p.wants(SentimentKind::W2v) || p.wants(SentimentKind::Bert) {
        if let Err(e) = p.score() {
            log::error!("score stage: {e}");
        }
    }
    if p.wants(SentimentKind::Dapt) {
        if let Err(e) = p.adapt() {
            log::error!("adapt stage: {e}");
        }
    }
    let report = p.evaluate();
    p.write_manifest()?;
    Ok(RunOutcome { report: report?, manifest: p.manifest.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::ALL {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
        }
        assert!("bogus".parse::<Stage>().is_err());
    }

    #[test]
    fn sentiment_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let rows = vec![("F1".to_string(), 2019, 0.1 + 0.2, 1.0 / 3.0), ("F2".to_string(), 2020, 0.0, 1.0)];
        write_sentiment_csv(&p, &rows).unwrap();
        assert_eq!(read_sentiment_csv(&p).unwrap(), rows);
    }

    #[test]
    fn content_key_separates_parts() {
        assert_ne!(content_key(&[b"ab", b"c"]), content_key(&[b"a", b"bc"]));
        assert_eq!(content_key(&[b"x"]).len(), 16);
    }
}
