//! Single-hidden-layer perceptron with logistic activations throughout,
//! trained full-batch on the mean cross-entropy plus an L2 weight penalty
//! (`decay`).
//!
//! Weights initialize uniformly in [-0.5, 0.5] from the caller's stream, in
//! a frozen order (hidden-layer matrix row-major with its bias row first,
//! then the output weights). Training uses resilient backpropagation
//! (iRprop-): each weight keeps its own step size, grown when the gradient
//! sign holds and shrunk when it flips, which converges in far fewer epochs
//! than a fixed-rate descent on this loss surface. Up to 500 epochs, with
//! early stop once the gradient norm falls under 1e-6. Tuning
//! cross-validates the hidden size (and optionally the decay) and prefers
//! smaller sizes on error ties.

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::num::Real;
use crate::rng;

use super::logistic::sigmoid;
use super::{fold_assignment, ModelError, TrainingTable};

/// Initial per-weight step size.
const INITIAL_STEP: f64 = 0.1;
/// Step growth factor when the gradient sign repeats.
const STEP_GROW: f64 = 1.2;
/// Step shrink factor when the gradient sign flips.
const STEP_SHRINK: f64 = 0.5;
/// Bounds on the per-weight step.
const STEP_MAX: f64 = 50.0;
const STEP_MIN: f64 = 1e-8;
/// Epoch cap; fits that hit it without meeting the gradient tolerance are
/// flagged unconverged but remain usable.
const MAX_EPOCHS: usize = 500;
/// Gradient norm below which training stops as converged.
const GRAD_TOL: f64 = 1e-6;

/// A trained perceptron.
#[derive(Debug, Clone)]
pub struct MlpModel<F> {
    /// Hidden-layer weights, `(width + 1) x hidden`; row 0 holds the biases.
    pub w1: Array2<F>,
    /// Output weights, length `hidden + 1`; entry 0 is the bias.
    pub w2: Vec<F>,
    pub hidden: usize,
    pub decay: F,
    /// Whether the gradient tolerance was met within the epoch cap.
    pub converged: bool,
    /// Training loss at the final weights.
    pub final_loss: F,
    /// Cross-validated misclassification rate, when the model was tuned.
    pub cv_error: Option<f64>,
}

impl<F: Real> MlpModel<F> {
    pub fn width(&self) -> usize {
        self.w1.shape()[0] - 1
    }

    /// Success probability for one feature row.
    pub fn forward(&self, row: &[F]) -> F {
        let h = self.hidden;
        let d = self.width();
        debug_assert_eq!(row.len(), d);
        let mut out = self.w2[0];
        for j in 0..h {
            let mut s = self.w1[[0, j]];
            for (f, &value) in row.iter().enumerate() {
                s += self.w1[[f + 1, j]] * value;
            }
            out += self.w2[j + 1] * sigmoid(s);
        }
        sigmoid(out)
    }
}

/// Training objective and its gradient at the given weights: mean
/// cross-entropy of the 0/1 labels plus `decay` times the squared norm of
/// all weights (biases included). Returns `(loss, grad_w1, grad_w2)`.
pub fn loss_and_gradient<F: Real>(
    features: &Array2<F>,
    labels: &[u8],
    w1: &Array2<F>,
    w2: &[F],
    decay: F,
) -> (F, Array2<F>, Vec<F>) {
    let n = features.shape()[0];
    let d = features.shape()[1];
    let h = w1.shape()[1];
    debug_assert_eq!(w1.shape()[0], d + 1);
    debug_assert_eq!(w2.len(), h + 1);

    let mut grad_w1 = Array2::zeros((d + 1, h));
    let mut grad_w2 = vec![F::zero(); h + 1];
    let mut loss = F::zero();
    let inv_n = F::one() / F::of(n as f64);
    let tiny = F::of(1e-12);
    let mut activations = vec![F::zero(); h];

    for i in 0..n {
        let mut out_pre = w2[0];
        for j in 0..h {
            let mut s = w1[[0, j]];
            for f in 0..d {
                s += w1[[f + 1, j]] * features[[i, f]];
            }
            let a = sigmoid(s);
            activations[j] = a;
            out_pre += w2[j + 1] * a;
        }
        let out = sigmoid(out_pre);
        let y = F::of(labels[i] as f64);
        let clamped = out.max(tiny).min(F::one() - tiny);
        loss -= (y * clamped.ln() + (F::one() - y) * (F::one() - clamped).ln()) * inv_n;
        // Cross-entropy with a logistic output: d loss / d out_pre = out - y.
        let delta_out = (out - y) * inv_n;
        grad_w2[0] += delta_out;
        for j in 0..h {
            grad_w2[j + 1] += delta_out * activations[j];
            let delta_hidden = delta_out * w2[j + 1] * activations[j] * (F::one() - activations[j]);
            grad_w1[[0, j]] += delta_hidden;
            for f in 0..d {
                grad_w1[[f + 1, j]] += delta_hidden * features[[i, f]];
            }
        }
    }

    if decay > F::zero() {
        let two = F::of(2.0);
        let mut penalty = F::zero();
        for (g, w) in grad_w1.iter_mut().zip(w1.iter()) {
            penalty += *w * *w;
            *g += two * decay * *w;
        }
        for (g, w) in grad_w2.iter_mut().zip(w2.iter()) {
            penalty += *w * *w;
            *g += two * decay * *w;
        }
        loss += decay * penalty;
    }
    (loss, grad_w1, grad_w2)
}

fn grad_norm<F: Real>(grad_w1: &Array2<F>, grad_w2: &[F]) -> F {
    let mut sq = F::zero();
    for g in grad_w1.iter().chain(grad_w2.iter()) {
        sq += *g * *g;
    }
    sq.sqrt()
}

/// One resilient-backpropagation update over a weight slice. Steps move
/// against the gradient sign by the per-weight step; the step grows when the
/// sign repeats and shrinks when it flips, in which case the update is
/// skipped for one epoch (the iRprop- rule).
fn rprop_step<F: Real>(weights: &mut [F], grad: &[F], prev_grad: &mut [F], step: &mut [F]) {
    let zero = F::zero();
    for k in 0..weights.len() {
        let mut g = grad[k];
        let product = g * prev_grad[k];
        if product > zero {
            step[k] = (step[k] * F::of(STEP_GROW)).min(F::of(STEP_MAX));
        } else if product < zero {
            step[k] = (step[k] * F::of(STEP_SHRINK)).max(F::of(STEP_MIN));
            g = zero;
        }
        if g > zero {
            weights[k] -= step[k];
        } else if g < zero {
            weights[k] += step[k];
        }
        prev_grad[k] = g;
    }
}

/// Trains a perceptron with `hidden` units. Weight initialization draws from
/// `rng` in the frozen order documented on the module.
pub fn fit_mlp<F: Real>(
    features: &Array2<F>,
    labels: &[u8],
    hidden: usize,
    decay: F,
    rng: &mut ChaCha8Rng,
) -> Result<MlpModel<F>, ModelError> {
    let n = features.shape()[0];
    let d = features.shape()[1];
    if n == 0 {
        return Err(ModelError::EmptyTable);
    }
    assert_eq!(n, labels.len(), "one label per feature row");
    if hidden == 0 {
        return Err(ModelError::NumericalFailure("hidden layer needs at least one unit".into()));
    }

    let mut w1 = Array2::zeros((d + 1, hidden));
    for v in w1.iter_mut() {
        *v = F::of(rng::unit_f64(rng) - 0.5);
    }
    let mut w2: Vec<F> = (0..hidden + 1).map(|_| F::of(rng::unit_f64(rng) - 0.5)).collect();

    let n_w1 = (d + 1) * hidden;
    let mut prev_g1 = vec![F::zero(); n_w1];
    let mut prev_g2 = vec![F::zero(); hidden + 1];
    let mut step_w1 = vec![F::of(INITIAL_STEP); n_w1];
    let mut step_w2 = vec![F::of(INITIAL_STEP); hidden + 1];

    let (mut loss, mut grad_w1, mut grad_w2) = loss_and_gradient(features, labels, &w1, &w2, decay);
    let mut converged = false;
    for _ in 0..MAX_EPOCHS {
        if !loss.is_finite() {
            return Err(ModelError::NumericalFailure("training loss became non-finite".into()));
        }
        if grad_norm(&grad_w1, &grad_w2) < F::of(GRAD_TOL) {
            converged = true;
            break;
        }
        rprop_step(
            w1.as_slice_mut().expect("hidden weights are contiguous"),
            grad_w1.as_slice().expect("gradient is contiguous"),
            &mut prev_g1,
            &mut step_w1,
        );
        rprop_step(&mut w2, &grad_w2, &mut prev_g2, &mut step_w2);
        let (next_loss, next_g1, next_g2) = loss_and_gradient(features, labels, &w1, &w2, decay);
        loss = next_loss;
        grad_w1 = next_g1;
        grad_w2 = next_g2;
    }

    Ok(MlpModel { w1, w2, hidden, decay, converged, final_loss: loss, cv_error: None })
}

/// Cross-validates hidden sizes (and decay values) on the table and refits
/// the winner on all rows. Error ties prefer the smaller size, then the
/// smaller decay. Fold assignment and every weight initialization draw from
/// `rng` in a frozen order, so tuning is reproducible and parallel-safe.
pub fn tune_mlp<F: Real>(
    table: &TrainingTable<F>,
    sizes: &[usize],
    decays: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<MlpModel<F>, ModelError> {
    let n = table.n_rows();
    if n == 0 {
        return Err(ModelError::EmptyTable);
    }
    if n < 2 {
        return Err(ModelError::NumericalFailure(
            "cross-validation needs at least two rows".into(),
        ));
    }
    assert!(!sizes.is_empty() && !decays.is_empty(), "tuning grids must be non-empty");
    let n_folds = n.min(10);
    let assignment = fold_assignment(n, n_folds, rng);

    // Pre-derive one seed per (size, decay, fold) fit, plus one for the final
    // refit, in a fixed order; the fits themselves can then run in parallel.
    use rand_chacha::rand_core::RngCore;
    let mut jobs = Vec::new();
    for (si, &size) in sizes.iter().enumerate() {
        for (di, &decay) in decays.iter().enumerate() {
            for fold in 0..n_folds {
                jobs.push((si, di, size, decay, fold, rng.next_u64()));
            }
        }
    }
    let refit_seed = rng.next_u64();

    let features = table.features();
    let labels = table.labels();
    let fold_rows: Vec<(Vec<usize>, Vec<usize>)> = (0..n_folds)
        .map(|f| {
            let train: Vec<usize> = (0..n).filter(|&i| assignment[i] != f).collect();
            let held: Vec<usize> = (0..n).filter(|&i| assignment[i] == f).collect();
            (train, held)
        })
        .collect();

    let errors: Vec<Result<(usize, usize, u32), ModelError>> = jobs
        .par_iter()
        .map(|&(si, di, size, decay, fold, seed)| {
            let (train, held) = &fold_rows[fold];
            let sub_features = gather_rows(features, train);
            let sub_labels: Vec<u8> = train.iter().map(|&i| labels[i]).collect();
            let mut fit_rng = rng::stream(seed, &[]);
            let model = fit_mlp(&sub_features, &sub_labels, size, F::of(decay), &mut fit_rng)?;
            let wrong = held
                .iter()
                .filter(|&&i| {
                    let row: Vec<F> = (0..features.shape()[1]).map(|j| features[[i, j]]).collect();
                    let score = model.forward(&row);
                    u8::from(score >= F::of(0.5)) != labels[i]
                })
                .count() as u32;
            Ok((si, di, wrong))
        })
        .collect();

    let mut totals = vec![0u32; sizes.len() * decays.len()];
    for r in errors {
        let (si, di, wrong) = r?;
        totals[si * decays.len() + di] += wrong;
    }
    let (mut best_idx, mut best_errors) = (0usize, totals[0]);
    for (idx, &e) in totals.iter().enumerate().skip(1) {
        if e < best_errors {
            best_errors = e;
            best_idx = idx;
        }
    }
    let best_size = sizes[best_idx / decays.len()];
    let best_decay = decays[best_idx % decays.len()];

    let mut refit_rng = rng::stream(refit_seed, &[]);
    let mut model = fit_mlp(features, labels, best_size, F::of(best_decay), &mut refit_rng)?;
    model.cv_error = Some(best_errors as f64 / n as f64);
    Ok(model)
}

fn gather_rows<F: Real>(features: &Array2<F>, rows: &[usize]) -> Array2<F> {
    let d = features.shape()[1];
    let mut out = Array2::zeros((rows.len(), d));
    for (r, &i) in rows.iter().enumerate() {
        for j in 0..d {
            out[[r, j]] = features[[i, j]];
        }
    }
    out
}

/// Mean squared error of the forward pass against 0/1 labels; a training
/// diagnostic used by the tests.
pub fn mean_squared_error<F: Real>(model: &MlpModel<F>, features: &Array2<F>, labels: &[u8]) -> F {
    let n = features.shape()[0];
    let mut acc = F::zero();
    for i in 0..n {
        let row: Vec<F> = (0..features.shape()[1]).map(|j| features[[i, j]]).collect();
        let diff = model.forward(&row) - F::of(labels[i] as f64);
        acc += diff * diff;
    }
    acc / F::of(n as f64)
}
