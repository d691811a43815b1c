use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_dim, check_training, ClassifierError};

/// Intercept name in coefficient listings.
const INTERCEPT: &str = "const";

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// `beta[0] + beta[1..]·x`.
fn linear(beta: &[f64], x: &[f64]) -> f64 {
    beta[0] + beta[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
}

/// Bernoulli log-likelihood with logistic link. `beta` is intercept-first,
/// rows of `x` exclude the constant.
pub fn log_likelihood(beta: &[f64], x: &[Vec<f64>], y: &[u8]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(row, &yi)| {
            let z = linear(beta, row);
            if yi == 1 {
                -softplus(-z)
            } else {
                -softplus(z)
            }
        })
        .sum()
}

pub fn gradient(beta: &[f64], x: &[Vec<f64>], y: &[u8]) -> Vec<f64> {
    let mut g = vec![0.0; beta.len()];
    for (row, &yi) in x.iter().zip(y) {
        let r = yi as f64 - logistic(linear(beta, row));
        g[0] += r;
        for (gj, v) in g[1..].iter_mut().zip(row) {
            *gj += r * v;
        }
    }
    g
}

/// Hessian of the log-likelihood (negative semidefinite), row-major.
pub fn hessian(beta: &[f64], x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let p = beta.len();
    let mut h = vec![vec![0.0; p]; p];
    let mut aug = vec![1.0; p];
    for row in x {
        aug[1..].copy_from_slice(row);
        let pi = logistic(linear(beta, row));
        let w = pi * (1.0 - pi);
        for a in 0..p {
            for b in a..p {
                h[a][b] -= w * aug[a] * aug[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            h[a][b] = h[b][a];
        }
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HazardOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub separation_norm: f64,
}

impl Default for HazardOptions {
    fn default() -> Self {
        Self { max_iter: 100, grad_tol: 1e-8, separation_norm: 1e6 }
    }
}

/// Discrete-time hazard model: logistic regression fit by maximum likelihood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardModel {
    /// Coefficient names, intercept first.
    pub names: Vec<String>,
    pub beta: Vec<f64>,
    pub log_lik_fit: f64,
    pub log_lik_null: f64,
    pub n: usize,
    pub iterations: usize,
    pub grad_norm: f64,
}

impl HazardModel {
    pub fn probability(&self, x: &[f64]) -> Result<f64, ClassifierError> {
        check_dim(self.beta.len() - 1, x)?;
        Ok(logistic(linear(&self.beta, x)))
    }

    pub fn predict_with_threshold(&self, x: &[f64], threshold: f64) -> Result<u8, ClassifierError> {
        Ok(u8::from(self.probability(x)? > threshold))
    }

    /// 1 iff the event probability exceeds 0.5.
    pub fn predict(&self, x: &[f64]) -> Result<u8, ClassifierError> {
        self.predict_with_threshold(x, 0.5)
    }

    pub fn coefficients(&self) -> Vec<(String, f64)> {
        self.names.iter().cloned().zip(self.beta.iter().copied()).collect()
    }
}

/// Newton-Raphson with step halving. The null log-likelihood is the
/// closed-form intercept-only optimum.
pub fn hazard_fit(
    x: &[Vec<f64>],
    y: &[u8],
    names: &[String],
    opts: &HazardOptions,
) -> Result<HazardModel, ClassifierError> {
    let d = check_training(x, y)?;
    if names.len() != d {
        return Err(ClassifierError::InvalidParameter(format!("{} names for {d} features", names.len())));
    }
    let n = y.len();
    let n1 = y.iter().filter(|&&v| v == 1).count();
    if n1 == 0 || n1 == n {
        return Err(ClassifierError::SingleClass);
    }
    let rate = n1 as f64 / n as f64;
    let log_lik_null = n1 as f64 * rate.ln() + (n - n1) as f64 * (1.0 - rate).ln();

    let p = d + 1;
    let mut beta = vec![0.0; p];
    beta[0] = (rate / (1.0 - rate)).ln();
    let mut ll = log_likelihood(&beta, x, y);
    let mut g = gradient(&beta, x, y);
    let mut grad_norm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut iterations = 0;

    while grad_norm >= opts.grad_tol && iterations < opts.max_iter {
        iterations += 1;
        let h = hessian(&beta, x);
        // Newton direction solves (-H) delta = g.
        let neg_h = DMatrix::from_fn(p, p, |a, b| -h[a][b]);
        let rhs = DVector::from_column_slice(&g);
        let delta = match neg_h.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => {
                let ridge = 1e-10 * (1.0 + neg_h.diagonal().amax());
                match (neg_h + DMatrix::identity(p, p) * ridge).lu().solve(&rhs) {
                    Some(s) => s,
                    None => break,
                }
            }
        };
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> = beta.iter().zip(delta.iter()).map(|(b, d)| b + step * d).collect();
            let cand_ll = log_likelihood(&cand, x, y);
            if cand_ll >= ll - 1e-12 * ll.abs().max(1.0) {
                beta = cand;
                ll = cand_ll;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        g = gradient(&beta, x, y);
        grad_norm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !accepted || beta.iter().map(|b| b * b).sum::<f64>().sqrt() > opts.separation_norm {
            break;
        }
    }

    let norm = beta.iter().map(|b| b * b).sum::<f64>().sqrt();
    // A fit that puts every point strictly on its own side means the data
    // are separable and the likelihood has no finite maximum.
    let separates = x.iter().zip(y).all(|(row, &yi)| {
        let z = linear(&beta, row);
        if yi == 1 {
            z > 0.0
        } else {
            z < 0.0
        }
    });
    if !norm.is_finite() || norm > opts.separation_norm || separates {
        return Err(ClassifierError::Separation { norm });
    }
    if grad_norm >= opts.grad_tol {
        return Err(ClassifierError::NoConvergence {
            iterations,
            detail: format!("gradient max-norm {grad_norm:.3e}"),
        });
    }
    let mut all_names = vec![INTERCEPT.to_string()];
    all_names.extend(names.iter().cloned());
    Ok(HazardModel { names: all_names, beta, log_lik_fit: ll, log_lik_null, n, iterations, grad_norm })
}
