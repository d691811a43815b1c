use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{RunnerError, SyntheticSpec};
use crate::adaptation::AdaptationConfig;
use crate::classifiers::ClassifierKind;
use crate::evaluation::SplitPlan;
use crate::features::{SentimentKind, VariableSet};
use crate::scoring::FineTuneParams;

pub const ENV_BACKEND_URL: &str = "DISTRESS_BACKEND_URL";
pub const ENV_OUT: &str = "DISTRESS_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusPaths {
    /// Filing index CSV.
    pub index: PathBuf,
    pub financials: PathBuf,
    #[serde(default)]
    pub abbreviations: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LexiconPaths {
    pub positive: PathBuf,
    pub negative: PathBuf,
}

fn default_temperature() -> f64 {
    0.5
}

fn default_timeout() -> u64 {
    60
}

fn default_retries() -> u32 {
    3
}

fn default_poll() -> u64 {
    5
}

fn default_train_timeout() -> u64 {
    6 * 3600
}

/// Where sentence scores come from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BackendConfig {
    /// No scorer; only FIN and FIN+DICT can run.
    #[default]
    None,
    /// Lexicon stub for the BERT slot, its adapted copy for the DAPT slot
    /// and, when `w2v_temperature` is set, a second stub for the W2V slot.
    Stub {
        #[serde(default = "default_temperature")]
        temperature: f64,
        #[serde(default)]
        w2v_temperature: Option<f64>,
    },
    Service {
        url: String,
        model_version: String,
        #[serde(default)]
        w2v_model_version: Option<String>,
        /// Skip the training round and score DAPT with this version.
        #[serde(default)]
        dapt_model_version: Option<String>,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
        #[serde(default = "default_retries")]
        retries: u32,
        #[serde(default = "default_poll")]
        poll_secs: u64,
        #[serde(default = "default_train_timeout")]
        train_timeout_secs: u64,
    },
}

impl BackendConfig {
    pub fn provides(&self, kind: SentimentKind) -> bool {
        match (self, kind) {
            (_, SentimentKind::Dict) => true,
            (BackendConfig::None, _) => false,
            (BackendConfig::Stub { w2v_temperature, .. }, SentimentKind::W2v) => w2v_temperature.is_some(),
            (BackendConfig::Service { w2v_model_version, .. }, SentimentKind::W2v) => w2v_model_version.is_some(),
            _ => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepMode {
    Off,
    /// Run the grid on repetition 0 and report it; keep the fixed values.
    Report,
    /// Run the grid on repetition 0 and use the best value everywhere.
    Select,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperConfig {
    pub knn_k: usize,
    pub svm_c: f64,
    pub sweep: SweepMode,
    pub knn_grid: Option<Vec<f64>>,
    pub svm_grid: Option<Vec<f64>>,
}

impl Default for HyperConfig {
    fn default() -> Self {
        Self { knn_k: 5, svm_c: 1e-5, sweep: SweepMode::Off, knn_grid: None, svm_grid: None }
    }
}

fn default_sets() -> Vec<VariableSet> {
    VariableSet::ALL.to_vec()
}

fn default_classifiers() -> Vec<ClassifierKind> {
    ClassifierKind::ALL.to_vec()
}

fn default_winsor() -> f64 {
    0.01
}

/// The TOML experiment file. Relative paths resolve against the file's
/// directory; `rng_seed` overrides the seeds of `[split]`, `[adaptation]`
/// and `[synthetic]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub rng_seed: u64,
    pub out_dir: PathBuf,
    pub corpus: CorpusPaths,
    #[serde(default)]
    pub lexicon: Option<LexiconPaths>,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default = "default_sets")]
    pub variable_sets: Vec<VariableSet>,
    #[serde(default = "default_classifiers")]
    pub classifiers: Vec<ClassifierKind>,
    #[serde(default)]
    pub hyper: HyperConfig,
    #[serde(default = "default_winsor")]
    pub winsor_level: f64,
    #[serde(default)]
    pub adaptation: AdaptationConfig,
    #[serde(default)]
    pub fine_tune: FineTuneParams,
    #[serde(default)]
    pub split: SplitPlan,
    /// Generator settings for `synth`; the corpus paths above should point
    /// into its output directory.
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl ExperimentConfig {
    /// Parses TOML text; relative paths resolve against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, RunnerError> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| RunnerError::InvalidConfig(e.to_string()))?;
        resolve(base, &mut cfg.out_dir);
        resolve(base, &mut cfg.corpus.index);
        resolve(base, &mut cfg.corpus.financials);
        if let Some(a) = cfg.corpus.abbreviations.as_mut() {
            resolve(base, a);
        }
        if let Some(l) = cfg.lexicon.as_mut() {
            resolve(base, &mut l.positive);
            resolve(base, &mut l.negative);
        }
        cfg.set_seed(cfg.rng_seed);
        Ok(cfg)
    }

    /// Loads the file, applies `DISTRESS_BACKEND_URL` / `DISTRESS_OUT` and
    /// validates.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, RunnerError> {
        let cfg = Self::load_unvalidated(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// As [`ExperimentConfig::load`] without the checks, for generating the
    /// inputs the config refers to.
    pub fn load_unvalidated(path: impl AsRef<Path>) -> Result<Self, RunnerError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| RunnerError::Io { path: path.into(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = Self::from_toml(&text, base)?;
        if let Ok(url) = std::env::var(ENV_BACKEND_URL) {
            cfg.set_backend_url(&url)?;
        }
        if let Ok(out) = std::env::var(ENV_OUT) {
            cfg.out_dir = PathBuf::from(out);
        }
        Ok(cfg)
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.rng_seed = seed;
        self.split.rng_seed = seed;
        self.adaptation.rng_seed = seed;
        if let Some(s) = self.synthetic.as_mut() {
            s.rng_seed = seed;
        }
    }

    pub fn set_backend_url(&mut self, new_url: &str) -> Result<(), RunnerError> {
        match &mut self.backend {
            BackendConfig::Service { url, .. } => {
                *url = new_url.to_string();
                Ok(())
            }
            _ => Err(RunnerError::InvalidConfig("a backend URL was given but the backend is not a service".into())),
        }
    }

    pub fn validate(&self) -> Result<(), RunnerError> {
        let mut paths = vec![&self.corpus.index, &self.corpus.financials];
        paths.extend(self.corpus.abbreviations.as_ref());
        if let Some(l) = &self.lexicon {
            paths.extend([&l.positive, &l.negative]);
        }
        if let Some(missing) = paths.into_iter().find(|p| !p.exists()) {
            return Err(RunnerError::InvalidConfig(format!("{} does not exist", missing.display())));
        }
        if self.variable_sets.is_empty() || self.classifiers.is_empty() {
            return Err(RunnerError::InvalidConfig("variable_sets and classifiers must be nonempty".into()));
        }
        if let Some(v) = self.variable_sets.iter().find(|v| v.sentiment().is_some_and(|k| !self.backend.provides(k))) {
            return Err(RunnerError::InvalidConfig(format!("{v} needs scores the configured backend does not provide")));
        }
        if !(0.0..0.5).contains(&self.winsor_level) {
            return Err(RunnerError::InvalidConfig(format!("winsor_level {} outside [0, 0.5)", self.winsor_level)));
        }
        if self.hyper.knn_k.is_multiple_of(2) || !(self.hyper.svm_c > 0.0 && self.hyper.svm_c.is_finite()) {
            return Err(RunnerError::InvalidConfig("knn_k must be odd and svm_c positive".into()));
        }
        if let BackendConfig::Stub { temperature, w2v_temperature } = &self.backend {
            if [Some(*temperature), *w2v_temperature].into_iter().flatten().any(|t| !(t > 0.0 && t.is_finite())) {
                return Err(RunnerError::InvalidConfig("stub temperatures must be positive".into()));
            }
        }
        self.split.validate()?;
        self.adaptation.validate()?;
        if let Some(s) = &self.synthetic {
            s.validate()?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, recorded in the run manifest.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
rng_seed = 3
out_dir = "out"
variable_sets = ["FIN", "FIN+DICT", "FIN+DAPT"]
classifiers = ["hazard"]

[corpus]
index = "data/index.csv"
financials = "data/financials.csv"

[backend]
kind = "stub"
temperature = 0.5
"#;

    #[test]
    fn parses_and_resolves() {
        let cfg = ExperimentConfig::from_toml(MINIMAL, Path::new("/cfg")).unwrap();
        assert_eq!(cfg.corpus.index, PathBuf::from("/cfg/data/index.csv"));
        assert_eq!(cfg.out_dir, PathBuf::from("/cfg/out"));
        assert_eq!((cfg.split.rng_seed, cfg.adaptation.rng_seed), (3, 3));
        assert_eq!(cfg.hyper, HyperConfig::default());
        assert_eq!(cfg.variable_sets[2], VariableSet::FinDapt);
        assert!(!cfg.backend.provides(SentimentKind::W2v));
        assert!(cfg.validate().is_err(), "paths do not exist");
        assert_eq!(cfg.hash(), ExperimentConfig::from_toml(MINIMAL, Path::new("/cfg")).unwrap().hash());
    }

    #[test]
    fn rejects_unknown_fields_and_bad_sets() {
        let bad = MINIMAL.replace("rng_seed = 3", "rng_seed = 3\nbogus = 1");
        assert!(matches!(ExperimentConfig::from_toml(&bad, Path::new(".")), Err(RunnerError::InvalidConfig(_))));
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("data")).unwrap();
        std::fs::write(dir.path().join("data/index.csv"), "").unwrap();
        std::fs::write(dir.path().join("data/financials.csv"), "").unwrap();
        let w2v = MINIMAL.replace("\"FIN+DAPT\"", "\"FIN+W2V\"");
        let cfg = ExperimentConfig::from_toml(&w2v, dir.path()).unwrap();
        assert!(matches!(cfg.validate(), Err(RunnerError::InvalidConfig(m)) if m.contains("FIN+W2V")));
        let ok = ExperimentConfig::from_toml(MINIMAL, dir.path()).unwrap();
        ok.validate().unwrap();
        let mut none = ok.clone();
        none.backend = BackendConfig::None;
        assert!(none.validate().is_err());
        assert!(none.clone().set_backend_url("http://x").is_err());
    }
}
