//! Bankruptcy classifiers. Labels are `0` (non-bankrupt) and `1` (bankrupt);
//! feature rows are plain `Vec<f64>` in a fixed column order.

mod hazard;
mod knn;
mod svm;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use hazard::{gradient, hazard_fit, hessian, log_likelihood, logistic, HazardModel, HazardOptions};
pub use knn::{knn_fit, KnnModel};
pub use svm::{optimal_bias, primal_objective, svm_fit, SvmModel, SvmOptions};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{rows} feature rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("training data must contain both classes")]
    SingleClass,
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("label {0} is not 0 or 1")]
    InvalidLabel(u8),
    #[error("data are separable, coefficients diverge (|beta| = {norm:.3e})")]
    Separation { norm: f64 },
    #[error("no convergence after {iterations} iterations: {detail}")]
    NoConvergence { iterations: usize, detail: String },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub(crate) fn check_training(x: &[Vec<f64>], y: &[u8]) -> Result<usize, ClassifierError> {
    if x.len() != y.len() {
        return Err(ClassifierError::LengthMismatch { rows: x.len(), labels: y.len() });
    }
    let first = x.first().ok_or(ClassifierError::EmptyTrainingSet)?;
    let d = first.len();
    if let Some(r) = x.iter().find(|r| r.len() != d) {
        return Err(ClassifierError::DimensionMismatch { expected: d, got: r.len() });
    }
    if let Some(&l) = y.iter().find(|&&l| l > 1) {
        return Err(ClassifierError::InvalidLabel(l));
    }
    Ok(d)
}

pub(crate) fn check_dim(expected: usize, x: &[f64]) -> Result<(), ClassifierError> {
    if x.len() != expected {
        return Err(ClassifierError::DimensionMismatch { expected, got: x.len() });
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Hazard,
    Knn,
    Svm,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 3] = [ClassifierKind::Hazard, ClassifierKind::Knn, ClassifierKind::Svm];

    pub fn label(self) -> &'static str {
        match self {
            ClassifierKind::Hazard => "hazard",
            ClassifierKind::Knn => "knn",
            ClassifierKind::Svm => "svm",
        }
    }
}

impl std::fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// A fitted model of any kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FittedModel {
    Hazard(HazardModel),
    Knn(KnnModel),
    Svm(SvmModel),
}

impl FittedModel {
    pub fn predict(&self, x: &[f64]) -> Result<u8, ClassifierError> {
        match self {
            FittedModel::Hazard(m) => m.predict(x),
            FittedModel::Knn(m) => m.predict(x),
            FittedModel::Svm(m) => m.predict(x),
        }
    }

    pub fn predict_all(&self, xs: &[Vec<f64>]) -> Result<Vec<u8>, ClassifierError> {
        xs.iter().map(|x| self.predict(x)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }
}

/// Fits `kind` with its single hyperparameter: `k` for kNN, `C` for the
/// SVM, ignored by the hazard model.
pub fn fit(
    kind: ClassifierKind,
    x: &[Vec<f64>],
    y: &[u8],
    names: &[String],
    hyper: Option<f64>,
) -> Result<FittedModel, ClassifierError> {
    match kind {
        ClassifierKind::Hazard => Ok(FittedModel::Hazard(hazard_fit(x, y, names, &HazardOptions::default())?)),
        ClassifierKind::Knn => {
            let k = hyper.unwrap_or(5.0);
            if k.fract() != 0.0 || k < 1.0 {
                return Err(ClassifierError::InvalidParameter(format!("k = {k} is not a positive integer")));
            }
            Ok(FittedModel::Knn(knn_fit(x, y, k as usize)?))
        }
        ClassifierKind::Svm => {
            let opts = SvmOptions { c: hyper.unwrap_or(1e-5), ..SvmOptions::default() };
            Ok(FittedModel::Svm(svm_fit(x, y, names, &opts)?))
        }
    }
}
