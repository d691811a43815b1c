//! Corporate-distress text analytics.
//!
//! The crate covers the whole pipeline from raw annual-report filings to
//! bankruptcy classification accuracy tables:
//!
//! * [`corpus`] locates and cleans the MD&A section and segments it.
//! * [`lexicon`] computes dictionary tone (positive / negative word ratios).
//! * [`scoring`] scores sentences with a 3-class backend and aggregates them
//!   into document sentiment.
//! * [`adaptation`] runs one self-training round: pseudo-labels, normalized
//!   self-entropy filtering and training-set emission.
//! * [`features`] builds labelled observations (winsorization, standardization).
//! * [`classifiers`] holds the hazard logistic model, kNN and a linear SVM.
//! * [`evaluation`] computes A1/A2, pseudo-R², t-tests and the repeated
//!   time-based resampling protocol.
//! * [`runner`] orchestrates experiments and generates synthetic corpora.

pub mod adaptation;
pub mod classifiers;
pub mod corpus;
pub mod evaluation;
pub mod features;
pub mod lexicon;
pub mod runner;
pub mod scoring;

mod error;

pub use error::Error;

/// Deterministic per-stream RNG used everywhere a seed is configured.
pub type SeededRng = rand_chacha::ChaCha8Rng;

/// Builds the RNG for `(seed, stream)`. Streams let independent units
/// (repetitions, rounds) draw reproducibly regardless of scheduling.
pub fn seeded_rng(seed: u64, stream: u64) -> SeededRng {
    use rand::SeedableRng;
    let mut rng = SeededRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
