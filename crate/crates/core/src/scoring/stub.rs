use serde::{Deserialize, Serialize};

use super::{ClassProbs, ScoringBackend, ScoringError, SentenceScore};
use crate::corpus::Sentence;
use crate::lexicon::Lexicon;

/// Fixed neutral-class logit before temperature scaling.
pub const NEUTRAL_PRIOR: f64 = 0.5;

/// Softmax temperature; always positive and finite.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Temperature(f64);

impl Temperature {
    pub fn new(t: f64) -> Result<Self, ScoringError> {
        if t.is_finite() && t > 0.0 {
            Ok(Self(t))
        } else {
            Err(ScoringError::InvalidTemperature(t))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Temperature {
    type Error = ScoringError;
    fn try_from(t: f64) -> Result<Self, Self::Error> {
        Self::new(t)
    }
}

impl From<Temperature> for f64 {
    fn from(t: Temperature) -> f64 {
        t.0
    }
}

pub(crate) fn softmax3(logits: [f64; 3]) -> [f64; 3] {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = logits.map(|l| (l - m).exp());
    let z: f64 = e.iter().sum();
    e.map(|v| v / z)
}

fn stub_probs(text: &str, lex: &Lexicon, temperature: Temperature) -> [f64; 3] {
    let (n_pos, n_neg, _) = lex.count_hits(text);
    let t = temperature.get();
    softmax3([n_pos as f64 / t, n_neg as f64 / t, NEUTRAL_PRIOR / t])
}

/// Softmax over `(n_pos, n_neg, NEUTRAL_PRIOR) / temperature`, with lexicon
/// hit counts taken over the sentence's word tokens.
pub fn stub_score(sentence: &Sentence, lex: &Lexicon, temperature: Temperature) -> SentenceScore {
    let [pos, neg, neu] = stub_probs(&sentence.text, lex, temperature);
    SentenceScore { doc_id: sentence.doc_id.clone(), sent_index: sentence.index, p: ClassProbs { pos, neg, neu } }
}

/// Deterministic offline backend built on [`stub_score`].
#[derive(Debug, Clone)]
pub struct StubBackend {
    lexicon: Lexicon,
    temperature: Temperature,
    version: String,
}

impl StubBackend {
    pub const NAME: &'static str = "stub";

    pub fn new(lexicon: Lexicon, temperature: f64) -> Result<Self, ScoringError> {
        let temperature = Temperature::new(temperature)?;
        Ok(Self { lexicon, temperature, version: format!("lexicon-stub-t{}", temperature.get()) })
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn temperature(&self) -> Temperature {
        self.temperature
    }
}

impl ScoringBackend for StubBackend {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn model_version(&self) -> &str {
        &self.version
    }

    fn max_sentence_tokens(&self) -> usize {
        512
    }

    fn score_batch(&self, sentences: &[String]) -> Result<Vec<Vec<f64>>, ScoringError> {
        Ok(sentences.iter().map(|s| stub_probs(s, &self.lexicon, self.temperature).to_vec()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::{score_document, SentimentClass};

    fn sentence(text: &str) -> Sentence {
        Sentence { doc_id: "d".into(), index: 0, text: text.into(), word_count: 0 }
    }

    fn t(v: f64) -> Temperature {
        Temperature::new(v).unwrap()
    }

    #[test]
    fn no_hits_neutral_largest() {
        let s = stub_score(&sentence("the company"), &Lexicon::sample(), t(1.0));
        let expected = 1.0 / (2.0 + 0.5f64.exp());
        assert!((s.p.pos - expected).abs() < 1e-15);
        assert!((s.p.neg - expected).abs() < 1e-15);
        assert!(s.p.neu > s.p.pos);
    }

    #[test]
    fn two_positive_hits() {
        let s = stub_score(&sentence("strength gains"), &Lexicon::sample(), t(1.0));
        assert_eq!(s.p.argmax(), SentimentClass::Positive);
    }

    #[test]
    fn one_each_is_symmetric() {
        let s = stub_score(&sentence("strength loss"), &Lexicon::sample(), t(0.7));
        assert_eq!(s.p.pos, s.p.neg);
    }

    #[test]
    fn lexicon_heavy_sentence_is_positive() {
        let s = stub_score(&sentence("strength expanded achieve profitability"), &Lexicon::sample(), t(1.0));
        // logits (4, 0, 0.5): p_pos = e^4 / (e^4 + 1 + e^0.5)
        let e4 = 4f64.exp();
        assert!((s.p.pos - e4 / (e4 + 1.0 + 0.5f64.exp())).abs() < 1e-15);
        assert!(s.p.pos > s.p.neg);
    }

    #[test]
    fn temperature_must_be_positive() {
        assert!(StubBackend::new(Lexicon::sample(), 0.0).is_err());
        assert!(Temperature::new(f64::NAN).is_err());
        assert!(serde_json::from_str::<Temperature>("-1.0").is_err());
    }

    #[test]
    fn three_sentence_document() {
        let d = crate::scoring::tests::doc("Strength grew. Losses fell. Nothing else.");
        let backend = StubBackend::new(Lexicon::sample(), 1.0).unwrap();
        let scores = score_document(&d, &backend).unwrap();
        assert_eq!(scores.len(), 3);
        for s in &scores {
            assert!((s.p.pos + s.p.neg + s.p.neu - 1.0).abs() < 1e-9);
        }
        assert_eq!(scores, score_document(&d, &backend).unwrap());
    }
}
