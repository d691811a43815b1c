use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ConfusionCounts, EvaluationError};
use crate::classifiers::{fit, ClassifierKind};

/// Ten log-spaced SVM `C` values from 1e-5 to 1.
pub fn svm_c_grid() -> Vec<f64> {
    (0..10).map(|i| 10f64.powf(-5.0 + 5.0 * i as f64 / 9.0)).collect()
}

pub fn knn_k_grid() -> Vec<f64> {
    vec![3.0, 5.0, 7.0, 9.0, 11.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub a1: Option<f64>,
    pub a2: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub classifier: ClassifierKind,
    pub rows: Vec<SweepRow>,
    /// Highest validation A2; ties go to the smaller value.
    pub best: Option<f64>,
}

pub struct SweepData<'a> {
    pub train_x: &'a [Vec<f64>],
    pub train_y: &'a [u8],
    pub val_x: &'a [Vec<f64>],
    pub val_y: &'a [u8],
    pub names: &'a [String],
}

/// Fits one model per grid value on the training data and scores it on the
/// validation data. A failing grid point is recorded and skipped.
pub fn hyperparameter_sweep(
    kind: ClassifierKind,
    grid: &[f64],
    data: &SweepData<'_>,
) -> Result<SweepResult, EvaluationError> {
    if grid.is_empty() {
        return Err(EvaluationError::EmptyGrid);
    }
    if data.val_x.is_empty() {
        return Err(EvaluationError::InsufficientData("empty validation set".into()));
    }
    let rows: Vec<SweepRow> = grid
        .par_iter()
        .map(|&value| {
            let outcome = fit(kind, data.train_x, data.train_y, data.names, Some(value))
                .map_err(|e| e.to_string())
                .and_then(|m| m.predict_all(data.val_x).map_err(|e| e.to_string()))
                .and_then(|pred| {
                    ConfusionCounts::from_predictions(data.val_y, &pred).accuracy().map_err(|e| e.to_string())
                });
            match outcome {
                Ok((a1, a2)) => SweepRow { value, a1: Some(a1), a2: Some(a2), error: None },
                Err(e) => {
                    log::warn!("{kind} sweep point {value}: {e}");
                    SweepRow { value, a1: None, a2: None, error: Some(e) }
                }
            }
        })
        .collect();
    let best = rows
        .iter()
        .filter_map(|r| r.a2.map(|a2| (a2, r.value)))
        .fold(None, |best: Option<(f64, f64)>, (a2, v)| match best {
            Some((ba2, bv)) if ba2 > a2 || (ba2 == a2 && bv <= v) => Some((ba2, bv)),
            _ => Some((a2, v)),
        })
        .map(|(_, v)| v);
    Ok(SweepResult { classifier: kind, rows, best })
}
