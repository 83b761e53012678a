//! Logistic regression fitted by iteratively reweighted least squares.
//!
//! The linear predictor is `b0 + b . features` and the success probability is
//! the logistic function of it. Each IRLS step solves the weighted normal
//! equations of the working response; collinear (or identically zero) columns
//! are aliased to zero exactly as regression software drops redundant terms.
//! Standard errors come from the inverse of the final weighted information
//! matrix, and Wald p-values compare `estimate / std_error` to the standard
//! normal.

use ndarray::Array2;

use crate::linalg;
use crate::num::Real;
use crate::stats;

use super::ModelError;

/// Convergence threshold on the largest coefficient change per step.
const STEP_TOL: f64 = 1e-8;
/// Iteration cap; fits that hit it are flagged unconverged.
const MAX_ITERATIONS: usize = 50;
/// Coefficient magnitude beyond which non-shrinking steps are read as
/// quasi-separation: the likelihood maximum is at infinity and iterating
/// further only inflates the estimates.
const SEPARATION_BOUND: f64 = 30.0;

/// A fitted logistic regression. `beta[0]` is the intercept, `beta[1..]`
/// follows the feature columns of the training table.
#[derive(Debug, Clone)]
pub struct LogisticFit<F> {
    pub beta: Vec<F>,
    /// Standard errors; NaN for aliased coefficients.
    pub std_errors: Vec<F>,
    /// Aliased coefficients were dropped as collinear and pinned to zero.
    pub aliased: Vec<bool>,
    pub converged: bool,
    pub n_iterations: usize,
    pub log_likelihood: F,
}

impl<F: Real> LogisticFit<F> {
    /// Number of feature columns the fit expects.
    pub fn width(&self) -> usize {
        self.beta.len() - 1
    }
}

/// Numerically stable logistic function.
pub fn sigmoid<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// Fits a logistic regression of 0/1 `labels` on `features` (one row per
/// observation) with an intercept.
pub fn fit_logistic<F: Real>(
    features: &Array2<F>,
    labels: &[u8],
) -> Result<LogisticFit<F>, ModelError> {
    let n = features.shape()[0];
    let d = features.shape()[1];
    if n == 0 {
        return Err(ModelError::EmptyTable);
    }
    assert_eq!(n, labels.len(), "one label per feature row");
    let positives = labels.iter().filter(|&&y| y == 1).count();
    if positives == 0 || positives == n {
        return Err(ModelError::DegenerateLabels);
    }

    let p = d + 1;
    let mut beta = vec![F::zero(); p];
    let mut aliased = vec![false; p];
    let mut converged = false;
    let mut n_iterations = 0;
    let mut prev_step = F::infinity();
    let w_floor = F::of(1e-10);

    let mut info = vec![F::zero(); p * p];
    let mut rhs = vec![F::zero(); p];
    let mut aug_row = vec![F::zero(); p];

    for iteration in 1..=MAX_ITERATIONS {
        n_iterations = iteration;
        info.iter_mut().for_each(|v| *v = F::zero());
        rhs.iter_mut().for_each(|v| *v = F::zero());
        for i in 0..n {
            aug_row[0] = F::one();
            for j in 0..d {
                aug_row[j + 1] = features[[i, j]];
            }
            let mut eta = beta[0];
            for j in 0..d {
                eta += beta[j + 1] * aug_row[j + 1];
            }
            let mu = sigmoid(eta);
            let w = (mu * (F::one() - mu)).max(w_floor);
            let y = F::of(labels[i] as f64);
            // Working response folded directly into the accumulators:
            // w * z = w * eta + (y - mu).
            let wz = w * eta + (y - mu);
            for r in 0..p {
                let wr = w * aug_row[r];
                rhs[r] += aug_row[r] * wz;
                let base = r * p;
                for c in r..p {
                    info[base + c] += wr * aug_row[c];
                }
            }
        }
        for r in 0..p {
            for c in 0..r {
                info[r * p + c] = info[c * p + r];
            }
        }

        let (inverse, alias_mask) = linalg::invert_spd(&info, p);
        aliased = alias_mask;
        let new_beta = linalg::matvec(&inverse, &rhs, p);
        let step = new_beta
            .iter()
            .zip(&beta)
            .map(|(a, b)| (*a - *b).abs())
            .fold(F::zero(), |m, v| if v > m { v } else { m });
        beta = new_beta;
        if step < F::of(STEP_TOL) {
            converged = true;
            break;
        }
        let max_coef = beta.iter().map(|b| b.abs()).fold(F::zero(), |m, v| v.max(m));
        if max_coef > F::of(SEPARATION_BOUND) && step >= prev_step {
            // Quasi-separated data: estimates are drifting to infinity.
            converged = false;
            break;
        }
        prev_step = step;
    }

    // Information matrix and log-likelihood at the final coefficients.
    info.iter_mut().for_each(|v| *v = F::zero());
    let mut log_likelihood = F::zero();
    let tiny = F::of(1e-15);
    for i in 0..n {
        aug_row[0] = F::one();
        for j in 0..d {
            aug_row[j + 1] = features[[i, j]];
        }
        let mut eta = beta[0];
        for j in 0..d {
            eta += beta[j + 1] * aug_row[j + 1];
        }
        let mu = sigmoid(eta);
        let w = (mu * (F::one() - mu)).max(w_floor);
        for r in 0..p {
            let wr = w * aug_row[r];
            let base = r * p;
            for c in r..p {
                info[base + c] += wr * aug_row[c];
            }
        }
        let mu_clamped = mu.max(tiny).min(F::one() - tiny);
        log_likelihood +=
            if labels[i] == 1 { mu_clamped.ln() } else { (F::one() - mu_clamped).ln() };
    }
    for r in 0..p {
        for c in 0..r {
            info[r * p + c] = info[c * p + r];
        }
    }
    let (covariance, final_alias) = linalg::invert_spd(&info, p);
    for (k, &al) in final_alias.iter().enumerate() {
        aliased[k] = aliased[k] || al;
    }
    let std_errors: Vec<F> =
        (0..p).map(|k| if aliased[k] { F::nan() } else { covariance[k * p + k].sqrt() }).collect();

    Ok(LogisticFit { beta, std_errors, aliased, converged, n_iterations, log_likelihood })
}

/// Success probability for one feature row.
pub fn predict_prob<F: Real>(fit: &LogisticFit<F>, row: &[F]) -> Result<F, ModelError> {
    if row.len() != fit.width() {
        return Err(ModelError::WidthMismatch { expected: fit.width(), got: row.len() });
    }
    let mut eta = fit.beta[0];
    for (b, x) in fit.beta[1..].iter().zip(row) {
        eta += *b * *x;
    }
    Ok(sigmoid(eta))
}

/// Two-sided Wald p-values, one per coefficient (intercept first). Aliased
/// coefficients and degenerate standard errors yield `None`.
pub fn wald_pvalues<F: Real>(fit: &LogisticFit<F>) -> Vec<Option<f64>> {
    fit.beta
        .iter()
        .zip(&fit.std_errors)
        .map(|(b, se)| {
            let se = se.as_f64();
            if !se.is_finite() || se <= 0.0 {
                return None;
            }
            let z = (b.as_f64() / se).abs();
            Some(2.0 * (1.0 - stats::normal_cdf(z)))
        })
        .collect()
}
