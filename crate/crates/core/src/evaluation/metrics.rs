use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::EvaluationError;

/// Class totals and correct counts: `nb`/`cnb` for non-bankrupt, `b`/`cb`
/// for bankrupt observations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub nb: usize,
    pub cnb: usize,
    pub b: usize,
    pub cb: usize,
}

impl ConfusionCounts {
    pub fn from_predictions(truth: &[u8], predicted: &[u8]) -> Self {
        let mut c = Self::default();
        for (&t, &p) in truth.iter().zip(predicted) {
            if t == 1 {
                c.b += 1;
                c.cb += usize::from(p == 1);
            } else {
                c.nb += 1;
                c.cnb += usize::from(p == 0);
            }
        }
        c
    }

    /// Share of non-bankrupt observations predicted bankrupt.
    pub fn type_i_rate(&self) -> Result<f64, EvaluationError> {
        Ok(1.0 - self.accuracy()?.0)
    }

    /// Share of bankrupt observations predicted non-bankrupt.
    pub fn type_ii_rate(&self) -> Result<f64, EvaluationError> {
        Ok(1.0 - self.accuracy()?.1)
    }

    /// `(A1, A2) = (CNB/NB, CB/B)`.
    pub fn accuracy(&self) -> Result<(f64, f64), EvaluationError> {
        if self.nb == 0 || self.b == 0 {
            return Err(EvaluationError::EmptyClass);
        }
        Ok((self.cnb as f64 / self.nb as f64, self.cb as f64 / self.b as f64))
    }
}

pub fn accuracy(counts: &ConfusionCounts) -> Result<(f64, f64), EvaluationError> {
    counts.accuracy()
}

fn check_likelihoods(ll_fit: f64, ll_null: f64, n: usize) -> Result<(), EvaluationError> {
    if n == 0 || !ll_fit.is_finite() || !ll_null.is_finite() || ll_fit < ll_null {
        return Err(EvaluationError::InvalidLikelihoodOrder { ll_fit, ll_null, n });
    }
    Ok(())
}

/// Cox-Snell pseudo-R²: `1 - exp(-2 (ll_fit - ll_null) / n)`.
pub fn pseudo_r2(ll_fit: f64, ll_null: f64, n: usize) -> Result<f64, EvaluationError> {
    check_likelihoods(ll_fit, ll_null, n)?;
    Ok(-(-2.0 * (ll_fit - ll_null) / n as f64).exp_m1())
}

/// Nagelkerke rescaling of Cox-Snell by its maximum `1 - exp(2 ll_null / n)`.
pub fn nagelkerke_r2(ll_fit: f64, ll_null: f64, n: usize) -> Result<f64, EvaluationError> {
    let cs = pseudo_r2(ll_fit, ll_null, n)?;
    let max = -(2.0 * ll_null / n as f64).exp_m1();
    Ok(if max > 0.0 { cs / max } else { 0.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub mean1: f64,
    pub mean0: f64,
    pub diff: f64,
    pub t_stat: f64,
    pub p_value: f64,
    pub stars: String,
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

/// Welch two-sample t statistic for `mean(class1) - mean(class0)`, with a
/// two-sided normal-approximation p-value and significance stars at
/// 0.10 / 0.05 / 0.01.
pub fn univariate_ttest(class1: &[f64], class0: &[f64]) -> Result<TTest, EvaluationError> {
    if class1.len() < 2 || class0.len() < 2 {
        return Err(EvaluationError::InsufficientData(format!(
            "t-test needs two values per group, got {} and {}",
            class1.len(),
            class0.len()
        )));
    }
    let (m1, v1) = mean_var(class1);
    let (m0, v0) = mean_var(class0);
    let diff = m1 - m0;
    let se = (v1 / class1.len() as f64 + v0 / class0.len() as f64).sqrt();
    let t_stat = if diff == 0.0 { 0.0 } else { diff / se };
    let normal = Normal::standard();
    let p_value = 2.0 * (1.0 - normal.cdf(t_stat.abs()));
    let stars = match p_value {
        p if p < 0.01 => "***",
        p if p < 0.05 => "**",
        p if p < 0.10 => "*",
        _ => "",
    };
    Ok(TTest { mean1: m1, mean0: m0, diff, t_stat, p_value, stars: stars.to_string() })
}

/// Mean and population standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    (m, (values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_distr::{Distribution, Normal as Gauss};

    #[test]
    fn accuracy_examples() {
        let c = ConfusionCounts { nb: 100, cnb: 68, b: 100, cb: 52 };
        assert_eq!(c.accuracy().unwrap(), (0.68, 0.52));
        assert_eq!(ConfusionCounts { nb: 3, cnb: 3, b: 2, cb: 2 }.accuracy().unwrap(), (1.0, 1.0));
        assert_eq!(ConfusionCounts { nb: 3, cnb: 0, b: 2, cb: 1 }.accuracy().unwrap().0, 0.0);
        assert!(matches!(ConfusionCounts { nb: 0, cnb: 0, b: 2, cb: 1 }.accuracy(), Err(EvaluationError::EmptyClass)));
    }

    #[test]
    fn from_predictions_counts() {
        let c = ConfusionCounts::from_predictions(&[0, 0, 1, 1, 1], &[0, 1, 1, 0, 1]);
        assert_eq!(c, ConfusionCounts { nb: 2, cnb: 1, b: 3, cb: 2 });
    }

    #[test]
    fn r2_fixtures() {
        assert_eq!(pseudo_r2(-50.0, -50.0, 100).unwrap(), 0.0);
        assert!((pseudo_r2(0.0, -50.0, 100).unwrap() - 0.6321205588).abs() < 1e-9);
        assert!((pseudo_r2(-40.0, -50.0, 100).unwrap() - 0.1812692469).abs() < 1e-9);
        assert!(matches!(pseudo_r2(-60.0, -50.0, 100), Err(EvaluationError::InvalidLikelihoodOrder { .. })));
        assert!(pseudo_r2(-1.0, -2.0, 0).is_err());
        let nk = nagelkerke_r2(-40.0, -50.0, 100).unwrap();
        assert!(nk > pseudo_r2(-40.0, -50.0, 100).unwrap() && nk <= 1.0);
    }

    #[test]
    fn ttest_examples() {
        let t = univariate_ttest(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((t.diff, t.t_stat), (0.0, 0.0));
        assert_eq!(t.stars, "");
        let zeros = vec![0.0; 1000];
        let ones: Vec<f64> = (0..1000).map(|i| 1.0 + 1e-6 * i as f64).collect();
        let t = univariate_ttest(&zeros, &ones).unwrap();
        assert!(t.t_stat < -100.0);
        assert_eq!(t.stars, "***");
        assert!(univariate_ttest(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn ttest_normal_samples() {
        let mut rng = crate::seeded_rng(21, 0);
        let a: Vec<f64> = (0..10000).map(|_| Gauss::new(0.0, 1.0).unwrap().sample(&mut rng)).collect();
        let b: Vec<f64> = (0..10000).map(|_| Gauss::new(1.0, 1.0).unwrap().sample(&mut rng)).collect();
        let t = univariate_ttest(&a, &b).unwrap();
        assert!((t.t_stat + 70.7).abs() < 5.0, "{}", t.t_stat);
    }

    #[test]
    fn population_sd() {
        assert_eq!(mean_sd(&[0.0, 2.0]), (1.0, 1.0));
    }

    proptest! {
        #[test]
        fn accuracy_complements_error_rates(nb in 1usize..500, b in 1usize..500, x in 0.0f64..1.0, z in 0.0f64..1.0) {
            let c = ConfusionCounts { nb, cnb: (x * nb as f64) as usize, b, cb: (z * b as f64) as usize };
            let (a1, a2) = c.accuracy().unwrap();
            prop_assert!((a1 - (1.0 - c.type_i_rate().unwrap())).abs() < 1e-15);
            prop_assert!((a2 - (1.0 - c.type_ii_rate().unwrap())).abs() < 1e-15);
            prop_assert!((0.0..=1.0).contains(&a1) && (0.0..=1.0).contains(&a2));
        }

        #[test]
        fn r2_is_monotone_and_bounded(null in -1e4f64..-1.0, d1 in 0.0f64..1e3, d2 in 0.0f64..1e3, n in 1usize..10000) {
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            let r_lo = pseudo_r2(null + lo, null, n).unwrap();
            let r_hi = pseudo_r2(null + hi, null, n).unwrap();
            prop_assert!(r_lo <= r_hi);
            prop_assert!((0.0..=1.0).contains(&r_lo));
            prop_assert!(r_hi <= 1.0);
        }
    }
}
