//! L-nearest-neighbors scoring with cross-validated choice of L.
//!
//! The score of a query row is the average label of its L nearest training
//! rows under Euclidean distance (squared distances are compared — the
//! ordering is identical). Exact distance ties are broken toward the lowest
//! row index so scores are reproducible. Tuning runs 10-fold cross-validation
//! over `L = 1..=l_max`, picks the L with the lowest misclassification rate,
//! and prefers the smaller L on ties; tables with fewer than ten rows fall
//! back to leave-one-out.

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::num::Real;

use super::{fold_assignment, ModelError, TrainingTable};

/// Nearest-neighbor model: the full training table plus the tuned L.
#[derive(Debug, Clone)]
pub struct KnnModel<F> {
    features: Array2<F>,
    labels: Vec<u8>,
    pub l: usize,
    /// Cross-validated misclassification rate of the chosen L.
    pub cv_error: f64,
}

impl<F: Real> KnnModel<F> {
    pub fn width(&self) -> usize {
        self.features.shape()[1]
    }

    pub fn n_rows(&self) -> usize {
        self.features.shape()[0]
    }

    /// Average label of the L nearest training rows.
    pub fn score(&self, row: &[F]) -> Result<F, ModelError> {
        knn_score(&self.features, &self.labels, row, self.l)
    }
}

/// Average label of the `l` nearest rows of `features` to `query`.
pub fn knn_score<F: Real>(
    features: &Array2<F>,
    labels: &[u8],
    query: &[F],
    l: usize,
) -> Result<F, ModelError> {
    let n = features.shape()[0];
    let d = features.shape()[1];
    if n == 0 {
        return Err(ModelError::EmptyTable);
    }
    assert_eq!(n, labels.len(), "one label per training row");
    if query.len() != d {
        return Err(ModelError::WidthMismatch { expected: d, got: query.len() });
    }
    if l == 0 || l > n {
        return Err(ModelError::NumericalFailure(format!("neighbor count {l} outside 1..={n}")));
    }
    let mut keyed: Vec<(F, usize)> = (0..n)
        .map(|i| {
            let mut dist = F::zero();
            for j in 0..d {
                let diff = features[[i, j]] - query[j];
                dist += diff * diff;
            }
            (dist, i)
        })
        .collect();
    let nearer = |a: &(F, usize), b: &(F, usize)| {
        a.0.partial_cmp(&b.0).expect("distances are finite").then(a.1.cmp(&b.1))
    };
    if l < n {
        keyed.select_nth_unstable_by(l - 1, nearer);
    }
    let hits: u32 = keyed[..l].iter().map(|&(_, i)| labels[i] as u32).sum();
    Ok(F::of(hits as f64) / F::of(l as f64))
}

/// Cross-validates `L = 1..=l_max` on the table and returns the model with
/// the winning L (smallest L on error ties). Fold assignment is drawn from
/// `rng`; fewer than ten rows switch to leave-one-out.
pub fn tune_knn<F: Real>(
    table: &TrainingTable<F>,
    l_max: usize,
    rng: &mut ChaCha8Rng,
) -> Result<KnnModel<F>, ModelError> {
    let n = table.n_rows();
    if n == 0 {
        return Err(ModelError::EmptyTable);
    }
    if n < 2 {
        return Err(ModelError::NumericalFailure(
            "cross-validation needs at least two rows".into(),
        ));
    }
    let n_folds = n.min(10);
    let assignment = fold_assignment(n, n_folds, rng);
    let mut fold_sizes = vec![0usize; n_folds];
    for &f in &assignment {
        fold_sizes[f] += 1;
    }
    let min_train = n - fold_sizes.iter().copied().max().expect("folds are non-empty");
    let l_cap = l_max.min(min_train);
    if l_cap == 0 {
        return Err(ModelError::NumericalFailure(
            "every fold leaves an empty training part".into(),
        ));
    }

    // Row indices of the complement of each fold.
    let train_rows: Vec<Vec<usize>> =
        (0..n_folds).map(|f| (0..n).filter(|&i| assignment[i] != f).collect()).collect();
    let features = table.features();
    let labels = table.labels();

    // One pass per held-out row computes its errors for every L at once:
    // sort the l_cap nearest neighbors, then prefix sums of their labels
    // give the score at each L.
    let error_counts: Vec<u32> = (0..n)
        .into_par_iter()
        .map(|q| {
            let train = &train_rows[assignment[q]];
            let d = features.shape()[1];
            let mut keyed: Vec<(F, usize)> = train
                .iter()
                .map(|&i| {
                    let mut dist = F::zero();
                    for j in 0..d {
                        let diff = features[[i, j]] - features[[q, j]];
                        dist += diff * diff;
                    }
                    (dist, i)
                })
                .collect();
            let nearer = |a: &(F, usize), b: &(F, usize)| {
                a.0.partial_cmp(&b.0).expect("distances are finite").then(a.1.cmp(&b.1))
            };
            if l_cap < keyed.len() {
                keyed.select_nth_unstable_by(l_cap - 1, nearer);
                keyed.truncate(l_cap);
            }
            keyed.sort_by(nearer);
            let mut errors = vec![0u32; l_cap];
            let mut hits = 0u32;
            for (pos, &(_, i)) in keyed.iter().enumerate() {
                hits += labels[i] as u32;
                let l = pos + 1;
                let predicted = u8::from(2 * hits >= l as u32);
                if predicted != labels[q] {
                    errors[l - 1] += 1;
                }
            }
            errors
        })
        .reduce(
            || vec![0u32; l_cap],
            |mut acc, row| {
                for (a, r) in acc.iter_mut().zip(row) {
                    *a += r;
                }
                acc
            },
        );

    let mut best_l = 1;
    let mut best_errors = error_counts[0];
    for (idx, &e) in error_counts.iter().enumerate().skip(1) {
        if e < best_errors {
            best_errors = e;
            best_l = idx + 1;
        }
    }
    Ok(KnnModel {
        features: features.clone(),
        labels: labels.to_vec(),
        l: best_l,
        cv_error: best_errors as f64 / n as f64,
    })
}
