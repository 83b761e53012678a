//! Stepwise model selection for logistic regression under the Akaike
//! information criterion, `AIC = 2 * #parameters - 2 * log-likelihood`
//! (the intercept counts as a parameter and is never dropped).
//!
//! The search starts from the full model and, at every step, evaluates all
//! single-column deletions and additions, taking the move with the lowest
//! AIC; it stops when no move improves on the current model. An exhaustive
//! best-subset search over all column masks is provided as an oracle for
//! small feature counts.

use ndarray::Array2;

use crate::num::Real;

use super::logistic::{fit_logistic, predict_prob, LogisticFit};
use super::ModelError;

/// Feature count cap for the exhaustive search (2^12 fits).
const EXHAUSTIVE_LIMIT: usize = 12;

/// A logistic regression restricted to a subset of feature columns.
#[derive(Debug, Clone)]
pub struct SelectedLogistic<F> {
    /// Column inclusion mask over the training table's features.
    pub mask: Vec<bool>,
    /// Fit over the selected columns; coefficients follow selected-column
    /// order, intercept first.
    pub fit: LogisticFit<F>,
    pub aic: f64,
}

impl<F: Real> SelectedLogistic<F> {
    /// Row width of the original (unrestricted) table.
    pub fn width(&self) -> usize {
        self.mask.len()
    }

    /// Number of selected columns.
    pub fn n_selected(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Success probability for one full-width feature row; the fit sees only
    /// the selected columns.
    pub fn score(&self, row: &[F]) -> Result<F, ModelError> {
        if row.len() != self.mask.len() {
            return Err(ModelError::WidthMismatch { expected: self.mask.len(), got: row.len() });
        }
        let selected: Vec<F> =
            row.iter().zip(&self.mask).filter_map(|(&v, &keep)| keep.then_some(v)).collect();
        predict_prob(&self.fit, &selected)
    }

    /// Names of the selected columns given the full-width column names.
    pub fn selected_names(&self, names: &[String]) -> Vec<String> {
        names.iter().zip(&self.mask).filter(|(_, &keep)| keep).map(|(n, _)| n.clone()).collect()
    }
}

/// AIC of a fit with `n_params` estimated coefficients (intercept included).
pub fn aic_of<F: Real>(fit: &LogisticFit<F>, n_params: usize) -> f64 {
    2.0 * n_params as f64 - 2.0 * fit.log_likelihood.as_f64()
}

fn fit_mask<F: Real>(
    features: &Array2<F>,
    labels: &[u8],
    mask: &[bool],
) -> Result<(LogisticFit<F>, f64), ModelError> {
    let cols: Vec<usize> =
        mask.iter().enumerate().filter_map(|(j, &keep)| keep.then_some(j)).collect();
    let n = features.shape()[0];
    let mut sub = Array2::zeros((n, cols.len()));
    for (c, &j) in cols.iter().enumerate() {
        for i in 0..n {
            sub[[i, c]] = features[[i, j]];
        }
    }
    let fit = fit_logistic(&sub, labels)?;
    let aic = aic_of(&fit, cols.len() + 1);
    Ok((fit, aic))
}

/// Both-directions stepwise AIC search from the full model.
pub fn stepwise_aic<F: Real>(
    features: &Array2<F>,
    labels: &[u8],
) -> Result<SelectedLogistic<F>, ModelError> {
    let d = features.shape()[1];
    let mut mask = vec![true; d];
    let (mut fit, mut aic) = fit_mask(features, labels, &mask)?;
    // Strict decrease per accepted move bounds the search; the cap below is
    // a safety net only.
    for _ in 0..(4 * d.max(1)) {
        let mut best: Option<(f64, usize, LogisticFit<F>)> = None;
        for j in 0..d {
            let mut candidate = mask.clone();
            candidate[j] = !candidate[j];
            let Ok((cand_fit, cand_aic)) = fit_mask(features, labels, &candidate) else {
                continue;
            };
            if best.as_ref().is_none_or(|(b, _, _)| cand_aic < *b) {
                best = Some((cand_aic, j, cand_fit));
            }
        }
        match best {
            Some((cand_aic, j, cand_fit)) if cand_aic < aic => {
                mask[j] = !mask[j];
                fit = cand_fit;
                aic = cand_aic;
            }
            _ => break,
        }
    }
    Ok(SelectedLogistic { mask, fit, aic })
}

/// Exhaustive best-subset AIC search; the oracle the stepwise search is
/// validated against. Capped at [`EXHAUSTIVE_LIMIT`] features.
pub fn exhaustive_aic_oracle<F: Real>(
    features: &Array2<F>,
    labels: &[u8],
) -> Result<SelectedLogistic<F>, ModelError> {
    let d = features.shape()[1];
    if d > EXHAUSTIVE_LIMIT {
        return Err(ModelError::TooManyFeatures { limit: EXHAUSTIVE_LIMIT, got: d });
    }
    let mut best: Option<SelectedLogistic<F>> = None;
    for bits in 0..(1u32 << d) {
        let mask: Vec<bool> = (0..d).map(|j| bits >> j & 1 == 1).collect();
        let Ok((fit, aic)) = fit_mask(features, labels, &mask) else {
            continue;
        };
        if best.as_ref().is_none_or(|b| aic < b.aic) {
            best = Some(SelectedLogistic { mask, fit, aic });
        }
    }
    best.ok_or(ModelError::DegenerateLabels)
}
