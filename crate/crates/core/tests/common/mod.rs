#![allow(dead_code)]

use std::path::{Path, PathBuf};

use distress_core::runner::{generate_synthetic, ExperimentConfig, SyntheticSpec};

/// A small generated corpus: enough bankrupt filings in the test window
/// for a handful of repetitions.
pub fn small_spec() -> SyntheticSpec {
    SyntheticSpec { n_firms: 160, sentences_per_doc: 12, rng_seed: 5, ..SyntheticSpec::default() }
}

pub fn generate(dir: &Path) -> PathBuf {
    let data = dir.join("data");
    generate_synthetic(&small_spec(), &data).unwrap();
    data
}

/// Experiment TOML over `generate`'s output with the given `[backend]` table.
pub fn config_text(backend: &str, sets: &str) -> String {
    format!(
        r#"
rng_seed = 11
out_dir = "out"
variable_sets = {sets}
classifiers = ["hazard", "knn"]

[corpus]
index = "data/index.csv"
financials = "data/financials.csv"

[lexicon]
positive = "data/lexicon/positive.txt"
negative = "data/lexicon/negative.txt"

{backend}

[adaptation]
n_documents = 200
entropy_threshold = 0.2
rounds = 1

[fine_tune]
epochs = 1
batch_size = 32
learning_rate = 0.05

[split]
window_start = 2018
window_end = 2020
n_bankrupt_test = 8
repetitions = 3
train_fraction = 0.6
val_fraction = 0.2
test_fraction = 0.2
train_pool = "remaining"
balance_classes = true
"#
    )
}

pub fn config(dir: &Path, backend: &str, sets: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(&config_text(backend, sets), dir).unwrap()
}

pub const STUB: &str = "[backend]\nkind = \"stub\"\ntemperature = 0.5\nw2v_temperature = 1.0\n";
