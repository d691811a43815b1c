use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::EvaluationError;
use crate::features::Observation;

/// Which observations outside the test set may be used for fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainPool {
    /// Everything not in the repetition's test set.
    Remaining,
    /// Only fiscal years before the test window.
    BeforeWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitPlan {
    /// First and last fiscal year of the test window, inclusive.
    pub window_start: i32,
    pub window_end: i32,
    pub n_bankrupt_test: usize,
    pub repetitions: usize,
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub train_pool: TrainPool,
    /// Undersample non-bankrupt observations in the fitting pool to the
    /// bankrupt count before the train/validation split.
    pub balance_classes: bool,
    pub rng_seed: u64,
}

impl Default for SplitPlan {
    fn default() -> Self {
        Self {
            window_start: 2018,
            window_end: 2020,
            n_bankrupt_test: 104,
            repetitions: 100,
            train_fraction: 0.6,
            val_fraction: 0.2,
            test_fraction: 0.2,
            train_pool: TrainPool::Remaining,
            balance_classes: true,
            rng_seed: 0,
        }
    }
}

impl SplitPlan {
    pub fn validate(&self) -> Result<(), EvaluationError> {
        let fr = [self.train_fraction, self.val_fraction, self.test_fraction];
        if fr.iter().any(|f| !(0.0..=1.0).contains(f)) || (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(EvaluationError::InvalidPlan(format!("fractions {fr:?} must lie in [0, 1] and sum to 1")));
        }
        if self.train_fraction == 0.0 {
            return Err(EvaluationError::InvalidPlan("train_fraction must be positive".into()));
        }
        if self.n_bankrupt_test == 0 || self.repetitions == 0 {
            return Err(EvaluationError::InvalidPlan("n_bankrupt_test and repetitions must be positive".into()));
        }
        if self.window_start > self.window_end {
            return Err(EvaluationError::InvalidPlan("window_start is after window_end".into()));
        }
        Ok(())
    }

    fn in_window(&self, o: &Observation) -> bool {
        (self.window_start..=self.window_end).contains(&o.fiscal_year)
    }
}

/// Index sets into the observation list for one repetition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub repetition: usize,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Builds `plan.repetitions` splits. Each test set holds the
/// `n_bankrupt_test` latest bankrupt observations of the window (the same
/// every time) plus as many non-bankrupt window observations drawn without
/// replacement. The rest of the pool, optionally class-balanced, is split
/// into train and validation, stratified by label. Repetition `r` draws from stream `r` of `rng_seed`.
pub fn time_based_resample(observations: &[Observation], plan: &SplitPlan) -> Result<Vec<Split>, EvaluationError> {
    plan.validate()?;
    let mut bankrupt: Vec<usize> =
        (0..observations.len()).filter(|&i| plan.in_window(&observations[i]) && observations[i].brupt == 1).collect();
    let healthy: Vec<usize> =
        (0..observations.len()).filter(|&i| plan.in_window(&observations[i]) && observations[i].brupt == 0).collect();
    if bankrupt.len() < plan.n_bankrupt_test || healthy.len() < plan.n_bankrupt_test {
        return Err(EvaluationError::WindowTooSparse {
            needed: plan.n_bankrupt_test,
            bankrupt: bankrupt.len(),
            non_bankrupt: healthy.len(),
        });
    }
    bankrupt.sort_by(|&a, &b| observations[b].filing_date.cmp(&observations[a].filing_date).then(a.cmp(&b)));
    let fixed = &bankrupt[..plan.n_bankrupt_test];
    let train_share = plan.train_fraction / (plan.train_fraction + plan.val_fraction);

    (0..plan.repetitions)
        .map(|rep| {
            let mut rng = crate::seeded_rng(plan.rng_seed, rep as u64);
            let sampled = rand::seq::index::sample(&mut rng, healthy.len(), plan.n_bankrupt_test);
            let mut test: Vec<usize> = fixed.to_vec();
            test.extend(sampled.iter().map(|k| healthy[k]));
            test.sort_unstable();

            let mut in_test = vec![false; observations.len()];
            test.iter().for_each(|&i| in_test[i] = true);
            let pool = (0..observations.len()).filter(|&i| {
                !in_test[i]
                    && match plan.train_pool {
                        TrainPool::Remaining => true,
                        TrainPool::BeforeWindow => observations[i].fiscal_year < plan.window_start,
                    }
            });
            let (mut pos, mut neg): (Vec<usize>, Vec<usize>) = pool.partition(|&i| observations[i].brupt == 1);
            let mut train = Vec::new();
            let mut val = Vec::new();
            neg.shuffle(&mut rng);
            pos.shuffle(&mut rng);
            if plan.balance_classes {
                neg.truncate(pos.len());
            }
            for class in [&neg, &pos] {
                let k = (class.len() as f64 * train_share).round() as usize;
                train.extend_from_slice(&class[..k]);
                val.extend_from_slice(&class[k..]);
            }
            train.sort_unstable();
            val.sort_unstable();
            Ok(Split { repetition: rep, train, val, test })
        })
        .collect()
}
