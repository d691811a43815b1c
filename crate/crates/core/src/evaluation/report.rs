use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{mean_sd, EvaluationError, SweepResult};
use crate::classifiers::ClassifierKind;
use crate::features::VariableSet;

/// Test-set outcome of one (variable set, classifier) fit in one repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionResult {
    pub repetition: usize,
    pub variable_set: VariableSet,
    pub classifier: ClassifierKind,
    pub hyperparameter: Option<f64>,
    pub a1: Option<f64>,
    pub a2: Option<f64>,
    pub cox_snell: Option<f64>,
    pub nagelkerke: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub variable_set: VariableSet,
    pub sweep: SweepResult,
}

/// Aggregate over repetitions. Standard deviations are population values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub variable_set: VariableSet,
    pub classifier: ClassifierKind,
    pub n_ok: usize,
    pub n_failed: usize,
    pub a1_mean: f64,
    pub a1_sd: f64,
    pub a2_mean: f64,
    pub a2_sd: f64,
    pub cox_snell_mean: Option<f64>,
    pub nagelkerke_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
    pub sweeps: Vec<SweepRecord>,
    pub repetitions: Vec<RepetitionResult>,
}

fn set_rank(v: VariableSet) -> usize {
    VariableSet::ALL.iter().position(|&s| s == v).unwrap_or(usize::MAX)
}

fn kind_rank(k: ClassifierKind) -> usize {
    ClassifierKind::ALL.iter().position(|&c| c == k).unwrap_or(usize::MAX)
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| mean_sd(&v).0)
}

impl MetricReport {
    /// Groups repetitions by variable set and classifier. Rows come out in
    /// classifier order, then variable-set order.
    pub fn from_repetitions(mut repetitions: Vec<RepetitionResult>, sweeps: Vec<SweepRecord>) -> Self {
        repetitions.sort_by_key(|r| (kind_rank(r.classifier), set_rank(r.variable_set), r.repetition));
        let rows = repetitions
            .chunk_by(|a, b| a.classifier == b.classifier && a.variable_set == b.variable_set)
            .map(|group| {
                let ok: Vec<&RepetitionResult> = group.iter().filter(|r| r.error.is_none()).collect();
                let a1: Vec<f64> = ok.iter().filter_map(|r| r.a1).collect();
                let a2: Vec<f64> = ok.iter().filter_map(|r| r.a2).collect();
                let (a1_mean, a1_sd) = mean_sd(&a1);
                let (a2_mean, a2_sd) = mean_sd(&a2);
                MetricRow {
                    variable_set: group[0].variable_set,
                    classifier: group[0].classifier,
                    n_ok: ok.len(),
                    n_failed: group.len() - ok.len(),
                    a1_mean,
                    a1_sd,
                    a2_mean,
                    a2_sd,
                    cox_snell_mean: mean_of(ok.iter().map(|r| r.cox_snell)),
                    nagelkerke_mean: mean_of(ok.iter().map(|r| r.nagelkerke)),
                }
            })
            .collect();
        Self { rows, sweeps, repetitions }
    }

    pub fn row(&self, classifier: ClassifierKind, set: VariableSet) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.classifier == classifier && r.variable_set == set)
    }

    /// One line per row, floats at six decimals so output is byte-stable.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), EvaluationError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "classifier",
            "variable_set",
            "a1_mean",
            "a1_sd",
            "a2_mean",
            "a2_sd",
            "r2_cox_snell",
            "r2_nagelkerke",
            "n_ok",
            "n_failed",
        ])?;
        let f = |x: f64| if x.is_finite() { format!("{x:.6}") } else { String::new() };
        let o = |x: Option<f64>| x.map(f).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.classifier.label().to_string(),
                r.variable_set.to_string(),
                f(r.a1_mean),
                f(r.a1_sd),
                f(r.a2_mean),
                f(r.a2_sd),
                o(r.cox_snell_mean),
                o(r.nagelkerke_mean),
                r.n_ok.to_string(),
                r.n_failed.to_string(),
            ])?;
        }
        w.flush().map_err(|e| EvaluationError::Io { path: "<csv>".into(), source: e })?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String, EvaluationError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rep(r: usize, set: VariableSet, kind: ClassifierKind, a1: f64, a2: f64, cs: Option<f64>) -> RepetitionResult {
        RepetitionResult {
            repetition: r,
            variable_set: set,
            classifier: kind,
            hyperparameter: None,
            a1: Some(a1),
            a2: Some(a2),
            cox_snell: cs,
            nagelkerke: cs.map(|c| c * 2.0),
            error: None,
        }
    }

    #[test]
    fn aggregates_and_orders_rows() {
        let mut reps = vec![
            rep(0, VariableSet::FinDapt, ClassifierKind::Knn, 0.5, 0.5, None),
            rep(0, VariableSet::Fin, ClassifierKind::Hazard, 0.6, 0.4, Some(0.1)),
            rep(1, VariableSet::Fin, ClassifierKind::Hazard, 0.8, 0.6, Some(0.3)),
        ];
        reps.push(RepetitionResult { error: Some("boom".into()), a1: None, a2: None, ..reps[1].clone() });
        let report = MetricReport::from_repetitions(reps, Vec::new());
        assert_eq!(report.rows.len(), 2);
        let h = &report.rows[0];
        assert_eq!((h.classifier, h.variable_set), (ClassifierKind::Hazard, VariableSet::Fin));
        assert_eq!((h.n_ok, h.n_failed), (2, 1));
        assert!((h.a1_mean - 0.7).abs() < 1e-12 && (h.a1_sd - 0.1).abs() < 1e-12);
        assert!((h.cox_snell_mean.unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(report.rows[1].cox_snell_mean, None);
        let csv = report.to_csv_string().unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("hazard,FIN,0.700000,0.100000,0.500000,0.100000,0.200000,0.400000,2,1"), "{}", lines[1]);
        assert!(lines[2].ends_with(",,,1,0"));
        let back: MetricReport = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(back, report);
    }
}
