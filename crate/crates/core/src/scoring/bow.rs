use std::collections::HashMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::stub::softmax3;
use super::{ScoringBackend, ScoringError, SentimentClass, StubBackend, NEUTRAL_PRIOR};
use crate::corpus::tokenize_words;

/// Optimizer settings for [`BagOfWordsBackend::fine_tune`]. Cross-entropy
/// loss, Adam updates, mini-batches reshuffled every epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FineTuneParams {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for FineTuneParams {
    fn default() -> Self {
        Self { epochs: 2, batch_size: 32, learning_rate: 0.05, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, seed: 0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub steps: usize,
    pub loss_per_step: Vec<f64>,
    pub epoch_mean_loss: Vec<f64>,
}

/// Linear softmax over word counts: `logits = bias + Σ_tokens weight[token]`.
///
/// Built from a [`StubBackend`] it reproduces the stub exactly (lexicon words
/// carry `1/T` on their class, the neutral bias is `NEUTRAL_PRIOR/T`), which
/// makes it the starting point of a self-training round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BagOfWordsBackend {
    name: String,
    version: String,
    vocab: HashMap<String, usize>,
    weights: Vec<[f64; 3]>,
    bias: [f64; 3],
}

impl BagOfWordsBackend {
    pub const NAME: &'static str = "stub-adapted";

    pub fn from_stub(stub: &StubBackend) -> Self {
        let inv_t = 1.0 / stub.temperature().get();
        let mut vocab = HashMap::new();
        let mut weights = Vec::new();
        for (word, class) in stub
            .lexicon()
            .positive()
            .iter()
            .map(|w| (w, SentimentClass::Positive))
            .chain(stub.lexicon().negative().iter().map(|w| (w, SentimentClass::Negative)))
        {
            let mut row = [0.0; 3];
            row[class.index()] = inv_t;
            vocab.insert(word.clone(), weights.len());
            weights.push(row);
        }
        Self {
            name: Self::NAME.to_string(),
            version: stub.model_version().to_string(),
            vocab,
            weights,
            bias: [0.0, 0.0, NEUTRAL_PRIOR * inv_t],
        }
    }

    pub fn vocabulary_size(&self) -> usize {
        self.vocab.len()
    }

    /// Weight row of a word (uppercase), if it is in the vocabulary.
    pub fn word_weights(&self, word: &str) -> Option<[f64; 3]> {
        self.vocab.get(word).map(|&i| self.weights[i])
    }

    fn features(&self, text: &str) -> Vec<(usize, f64)> {
        let mut counts: HashMap<usize, f64> = HashMap::new();
        for token in tokenize_words(text) {
            if let Some(&i) = self.vocab.get(&token) {
                *counts.entry(i).or_default() += 1.0;
            }
        }
        let mut f: Vec<_> = counts.into_iter().collect();
        f.sort_unstable_by_key(|&(i, _)| i);
        f
    }

    fn logits_of(&self, features: &[(usize, f64)]) -> [f64; 3] {
        let mut z = self.bias;
        for &(i, c) in features {
            for k in 0..3 {
                z[k] += c * self.weights[i][k];
            }
        }
        z
    }

    pub fn probabilities(&self, text: &str) -> [f64; 3] {
        softmax3(self.logits_of(&self.features(text)))
    }

    /// Returns a new model fine-tuned on `examples`; `self` is unchanged.
    /// Words unseen so far join the vocabulary with zero weights.
    pub fn fine_tune(
        &self,
        examples: &[(String, SentimentClass)],
        params: &FineTuneParams,
    ) -> Result<(Self, TrainingReport), ScoringError> {
        if examples.is_empty() {
            return Err(ScoringError::Training("empty training set".into()));
        }
        if params.epochs == 0 || params.batch_size == 0 || !(params.learning_rate > 0.0) {
            return Err(ScoringError::Training("epochs, batch size and learning rate must be positive".into()));
        }
        let mut model = self.clone();
        for (text, _) in examples {
            for token in tokenize_words(text) {
                if !model.vocab.contains_key(&token) {
                    model.vocab.insert(token, model.weights.len());
                    model.weights.push([0.0; 3]);
                }
            }
        }
        let data: Vec<(Vec<(usize, f64)>, usize)> =
            examples.iter().map(|(t, y)| (model.features(t), y.index())).collect();

        let n_params = model.weights.len() * 3 + 3;
        let mut m = vec![0.0; n_params];
        let mut v = vec![0.0; n_params];
        let mut grad = vec![0.0; n_params];
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut rng = crate::seeded_rng(params.seed, 0xf17e);
        let mut report = TrainingReport::default();
        let mut t = 0i32;

        for _ in 0..params.epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for batch in order.chunks(params.batch_size) {
                grad.iter_mut().for_each(|g| *g = 0.0);
                let scale = 1.0 / batch.len() as f64;
                let mut batch_loss = 0.0;
                for &idx in batch {
                    let (features, y) = &data[idx];
                    let p = softmax3(model.logits_of(features));
                    batch_loss -= p[*y].max(1e-300).ln();
                    let mut d = p;
                    d[*y] -= 1.0;
                    for &(i, c) in features {
                        for k in 0..3 {
                            grad[i * 3 + k] += scale * c * d[k];
                        }
                    }
                    let bias_at = n_params - 3;
                    for k in 0..3 {
                        grad[bias_at + k] += scale * d[k];
                    }
                }
                t += 1;
                let bc1 = 1.0 - params.beta1.powi(t);
                let bc2 = 1.0 - params.beta2.powi(t);
                for j in 0..n_params {
                    m[j] = params.beta1 * m[j] + (1.0 - params.beta1) * grad[j];
                    v[j] = params.beta2 * v[j] + (1.0 - params.beta2) * grad[j] * grad[j];
                    let step = params.learning_rate * (m[j] / bc1) / ((v[j] / bc2).sqrt() + params.epsilon);
                    if j < n_params - 3 {
                        model.weights[j / 3][j % 3] -= step;
                    } else {
                        model.bias[j - (n_params - 3)] -= step;
                    }
                }
                let mean = batch_loss * scale;
                if !mean.is_finite() {
                    return Err(ScoringError::Training("loss diverged".into()));
                }
                report.loss_per_step.push(mean);
                epoch_loss += batch_loss;
            }
            report.epoch_mean_loss.push(epoch_loss / data.len() as f64);
        }
        report.steps = t as usize;

        let mut hasher = Sha256::new();
        for (text, y) in examples {
            hasher.update(text.as_bytes());
            hasher.update([0, y.index() as u8]);
        }
        hasher.update(serde_json::to_vec(params).unwrap_or_default());
        let digest = hex::encode(hasher.finalize());
        model.version = format!("{}+ft-{}", self.version, &digest[..12]);
        Ok((model, report))
    }
}

impl ScoringBackend for BagOfWordsBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn model_version(&self) -> &str {
        &self.version
    }

    fn max_sentence_tokens(&self) -> usize {
        512
    }

    fn score_batch(&self, sentences: &[String]) -> Result<Vec<Vec<f64>>, ScoringError> {
        Ok(sentences.iter().map(|s| self.probabilities(s).to_vec()).collect())
    }
}
