use serde::{Deserialize, Serialize};

use super::{check_dim, check_training, dot, ClassifierError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmOptions {
    pub c: f64,
    /// Update budget is `max_epochs * n` pair updates.
    pub max_epochs: usize,
    /// Required duality gap, relative to `1 + |primal|`.
    pub gap_tol: f64,
    /// Initial maximal-violating-pair tolerance; tightened until the gap is met.
    pub kkt_eps: f64,
}

impl Default for SvmOptions {
    fn default() -> Self {
        Self { c: 1e-5, max_epochs: 10000, gap_tol: 1e-6, kkt_eps: 1e-3 }
    }
}

/// Linear soft-margin SVM `min ½|w|² + C Σ ξ` with an unregularized bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub names: Vec<String>,
    pub w: Vec<f64>,
    pub b: f64,
    pub c: f64,
    /// Per training point `max(0, 1 - y(w·x + b))`.
    pub slacks: Vec<f64>,
    pub alpha: Vec<f64>,
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    pub iterations: usize,
}

impl SvmModel {
    pub fn decision(&self, x: &[f64]) -> Result<f64, ClassifierError> {
        check_dim(self.w.len(), x)?;
        Ok(dot(&self.w, x) + self.b)
    }

    /// 1 iff `w·x + b > 0`; points on the hyperplane are non-bankrupt.
    pub fn predict(&self, x: &[f64]) -> Result<u8, ClassifierError> {
        Ok(u8::from(self.decision(x)? > 0.0))
    }

    pub fn coefficients(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = self.names.iter().cloned().zip(self.w.iter().copied()).collect();
        out.push(("b".into(), self.b));
        out
    }
}

fn sign(label: u8) -> f64 {
    if label == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Bias minimizing the hinge sum for fixed scores `f_i = w·x_i`. The
/// objective in `b` is piecewise linear with breakpoints `y_i - f_i`; the
/// optimum is any point between the `n_pos`-th and `(n_pos+1)`-th smallest
/// breakpoint, and the midpoint is returned.
pub fn optimal_bias(scores: &[f64], y: &[u8]) -> f64 {
    let mut bp: Vec<f64> = scores.iter().zip(y).map(|(f, &l)| sign(l) - f).collect();
    bp.sort_by(f64::total_cmp);
    let n_pos = y.iter().filter(|&&l| l == 1).count();
    match n_pos {
        0 => bp[0] - 1.0,
        k if k == bp.len() => bp[k - 1] + 1.0,
        k => 0.5 * (bp[k - 1] + bp[k]),
    }
}

pub fn primal_objective(w: &[f64], b: f64, x: &[Vec<f64>], y: &[u8], c: f64) -> f64 {
    let hinge: f64 = x.iter().zip(y).map(|(row, &l)| (1.0 - sign(l) * (dot(w, row) + b)).max(0.0)).sum();
    0.5 * dot(w, w) + c * hinge
}

/// SMO on the dual with maximal-violating-pair selection, keeping `w`
/// explicit. Stops once the duality gap (primal at the exact optimal bias)
/// is within `gap_tol * (1 + |primal|)`.
pub fn svm_fit(x: &[Vec<f64>], y: &[u8], names: &[String], opts: &SvmOptions) -> Result<SvmModel, ClassifierError> {
    let d = check_training(x, y)?;
    if names.len() != d {
        return Err(ClassifierError::InvalidParameter(format!("{} names for {d} features", names.len())));
    }
    if !(opts.c > 0.0 && opts.c.is_finite()) {
        return Err(ClassifierError::InvalidParameter(format!("C = {} must be positive", opts.c)));
    }
    let n = x.len();
    let n_pos = y.iter().filter(|&&l| l == 1).count();
    if n_pos == 0 || n_pos == n {
        return Err(ClassifierError::SingleClass);
    }
    let c = opts.c;
    let s: Vec<f64> = y.iter().map(|&l| sign(l)).collect();
    let qd: Vec<f64> = x.iter().map(|r| dot(r, r)).collect();
    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; d];
    let mut grad = vec![-1.0; n];
    let mut eps = opts.kkt_eps;
    let max_steps = opts.max_epochs.saturating_mul(n);
    let mut steps = 0;

    let gap_of = |w: &[f64], alpha: &[f64]| {
        let scores: Vec<f64> = x.iter().map(|r| dot(w, r)).collect();
        let b = optimal_bias(&scores, y);
        let primal = primal_objective(w, b, x, y, c);
        let dual = alpha.iter().sum::<f64>() - 0.5 * dot(w, w);
        (b, primal, dual)
    };

    let (b, primal, dual) = loop {
        let mut i = usize::MAX;
        let mut gmax = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut gmin = f64::INFINITY;
        for t in 0..n {
            let v = -s[t] * grad[t];
            let up = if s[t] > 0.0 { alpha[t] < c } else { alpha[t] > 0.0 };
            let low = if s[t] > 0.0 { alpha[t] > 0.0 } else { alpha[t] < c };
            if up && v > gmax {
                gmax = v;
                i = t;
            }
            if low && v < gmin {
                gmin = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin < eps {
            let (b, primal, dual) = gap_of(&w, &alpha);
            if primal - dual <= opts.gap_tol * (1.0 + primal.abs()) {
                break (b, primal, dual);
            }
            if eps < 1e-15 {
                return Err(ClassifierError::NoConvergence {
                    iterations: steps,
                    detail: format!("duality gap {:.3e} with no violating pair left", primal - dual),
                });
            }
            eps /= 10.0;
            continue;
        }
        if steps >= max_steps {
            let (_, primal, dual) = gap_of(&w, &alpha);
            return Err(ClassifierError::NoConvergence {
                iterations: steps,
                detail: format!("duality gap {:.3e}", primal - dual),
            });
        }
        steps += 1;

        let quad = (qd[i] + qd[j] - 2.0 * dot(&x[i], &x[j])).max(1e-12);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if s[i] != s[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = ((alpha[i] - old_i) * s[i], (alpha[j] - old_j) * s[j]);
        for k in 0..d {
            w[k] += di * x[i][k] + dj * x[j][k];
        }
        for t in 0..n {
            grad[t] = s[t] * dot(&w, &x[t]) - 1.0;
        }
    };

    let slacks = x.iter().zip(&s).map(|(r, si)| (1.0 - si * (dot(&w, r) + b)).max(0.0)).collect();
    Ok(SvmModel {
        names: names.to_vec(),
        w,
        b,
        c,
        slacks,
        alpha,
        primal,
        dual,
        gap: primal - dual,
        iterations: steps,
    })
}
