//! Classifiers trained on pooled recruitment rows.
//!
//! Every model consumes a [`TrainingTable`] — one row per candidate profile,
//! a 0/1 label marking the winner of its method — and produces a score for
//! unseen profiles. Candidates of a test method are then ranked by score;
//! whoever lands rank 1 is the model's predicted hire.
//!
//! Five model families are provided, mirroring a conventional applied-stats
//! toolbox: logistic regression, logistic regression with stepwise AIC
//! selection, L-nearest-neighbors, a single-hidden-layer perceptron, and a
//! soft-margin linear SVM. Each lives in its own submodule; this module owns
//! the shared vocabulary (views, tables, the fitted-model enum) and the
//! ranking of scored candidates.

pub mod knn;
pub mod logistic;
pub mod mlp;
pub mod stepwise;
pub mod svm;

use ndarray::Array2;
use rand_chacha::rand_core::RngCore;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::num::Real;
use crate::rng::{self, StreamTag};

pub use knn::{knn_score, tune_knn, KnnModel};
pub use logistic::{fit_logistic, predict_prob, wald_pvalues, LogisticFit};
pub use mlp::{fit_mlp, loss_and_gradient, tune_mlp, MlpModel};
pub use stepwise::{exhaustive_aic_oracle, stepwise_aic, SelectedLogistic};
pub use svm::{
    fit_svm_linear, kernel_decision, max_kkt_violation, solve_dual, DualSolution, SvmKernel,
    SvmModel,
};

/// Largest neighbor count searched when tuning the nearest-neighbor model.
pub const KNN_L_MAX: usize = 70;
/// Largest hidden-layer size searched when tuning the perceptron.
pub const MLP_SIZE_MAX: usize = 10;
/// Soft-margin cost used by the experiment harness.
pub const SVM_COST: f64 = 1.0;

/// Which feature blocks a model is allowed to see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureView {
    /// Ability, protected, and proxy blocks.
    Full,
    /// Ability and proxy blocks; the protected block is hidden.
    Anonymous,
}

impl FeatureView {
    pub fn name(self) -> &'static str {
        match self {
            FeatureView::Full => "full",
            FeatureView::Anonymous => "anonymous",
        }
    }

    pub fn parse(name: &str) -> Option<FeatureView> {
        match name {
            "full" => Some(FeatureView::Full),
            "anonymous" => Some(FeatureView::Anonymous),
            _ => None,
        }
    }

    /// Numeric identifier entering seed derivation; frozen.
    pub fn seed_id(self) -> u64 {
        match self {
            FeatureView::Full => 0,
            FeatureView::Anonymous => 1,
        }
    }

    /// Row width for blocks of `k` features.
    pub fn width(self, k: usize) -> usize {
        match self {
            FeatureView::Full => 3 * k,
            FeatureView::Anonymous => 2 * k,
        }
    }
}

/// Which ranking produced the winner labels of a training table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelSource {
    Perfect,
    Biased,
}

impl LabelSource {
    pub fn name(self) -> &'static str {
        match self {
            LabelSource::Perfect => "perfect",
            LabelSource::Biased => "biased",
        }
    }

    /// Numeric identifier entering seed derivation; frozen.
    pub fn seed_id(self) -> u64 {
        match self {
            LabelSource::Perfect => 0,
            LabelSource::Biased => 1,
        }
    }
}

/// Role of a feature column within a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureBlock {
    Ability,
    Protected,
    Proxy,
}

impl FeatureBlock {
    pub fn name(self) -> &'static str {
        match self {
            FeatureBlock::Ability => "ability",
            FeatureBlock::Protected => "protected",
            FeatureBlock::Proxy => "proxy",
        }
    }
}

/// Pooled training rows: one row per candidate profile across all training
/// methods, with a 0/1 label marking each method's winner. Rows carry no
/// method identity — the models never learn which profiles competed together.
#[derive(Debug, Clone)]
pub struct TrainingTable<F> {
    features: Array2<F>,
    labels: Vec<u8>,
    view: FeatureView,
    k_features: usize,
}

impl<F: Real> TrainingTable<F> {
    pub fn new(features: Array2<F>, labels: Vec<u8>, view: FeatureView, k_features: usize) -> Self {
        assert_eq!(features.shape()[0], labels.len(), "one label per row");
        assert_eq!(
            features.shape()[1],
            view.width(k_features),
            "feature width must match the view"
        );
        assert!(labels.iter().all(|&w| w <= 1), "labels are 0/1");
        TrainingTable { features, labels, view, k_features }
    }

    pub fn features(&self) -> &Array2<F> {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn view(&self) -> FeatureView {
        self.view
    }

    pub fn k_features(&self) -> usize {
        self.k_features
    }

    pub fn n_rows(&self) -> usize {
        self.features.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.features.shape()[1]
    }

    /// Block role of each feature column, in column order.
    pub fn column_blocks(&self) -> Vec<FeatureBlock> {
        let k = self.k_features;
        let mut blocks = vec![FeatureBlock::Ability; k];
        if self.view == FeatureView::Full {
            blocks.extend(std::iter::repeat_n(FeatureBlock::Protected, k));
        }
        blocks.extend(std::iter::repeat_n(FeatureBlock::Proxy, k));
        blocks
    }

    /// Column names in table order: `x1..xK`, `y1..yK` (full view only),
    /// `z1..zK`.
    pub fn column_names(&self) -> Vec<String> {
        let k = self.k_features;
        let mut names: Vec<String> = (1..=k).map(|i| format!("x{i}")).collect();
        if self.view == FeatureView::Full {
            names.extend((1..=k).map(|i| format!("y{i}")));
        }
        names.extend((1..=k).map(|i| format!("z{i}")));
        names
    }
}

/// Errors raised by model fitting and scoring.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelError {
    /// All training labels are identical; nothing separates the classes.
    DegenerateLabels,
    /// A feature row has the wrong number of columns for this model.
    WidthMismatch { expected: usize, got: usize },
    /// The table has no rows.
    EmptyTable,
    /// Exhaustive subset search is capped to keep runtimes bounded.
    TooManyFeatures { limit: usize, got: usize },
    /// Optimization produced non-finite values and could not recover.
    NumericalFailure(String),
}

impl std::fmt::Display for ModelError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelError::DegenerateLabels => {
                write!(f, "training labels are all identical; the model is undefined")
            }
            ModelError::WidthMismatch { expected, got } => {
                write!(f, "feature row has {got} columns, model expects {expected}")
            }
            ModelError::EmptyTable => write!(f, "training table has no rows"),
            ModelError::TooManyFeatures { limit, got } => {
                write!(f, "exhaustive search supports at most {limit} features, got {got}")
            }
            ModelError::NumericalFailure(msg) => write!(f, "numerical failure: {msg}"),
        }
    }
}

impl std::error::Error for ModelError {}

/// Identifies a model family; the unit the experiment harness iterates over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Logistic,
    LogisticAic,
    Knn,
    Mlp,
    SvmLinear,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Logistic,
        ModelKind::LogisticAic,
        ModelKind::Knn,
        ModelKind::Mlp,
        ModelKind::SvmLinear,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Logistic => "logistic",
            ModelKind::LogisticAic => "logistic-aic",
            ModelKind::Knn => "knn",
            ModelKind::Mlp => "mlp",
            ModelKind::SvmLinear => "svm-linear",
        }
    }

    pub fn parse(name: &str) -> Option<ModelKind> {
        match name {
            "logistic" => Some(ModelKind::Logistic),
            "logistic-aic" => Some(ModelKind::LogisticAic),
            "knn" => Some(ModelKind::Knn),
            "mlp" => Some(ModelKind::Mlp),
            "svm-linear" => Some(ModelKind::SvmLinear),
            _ => None,
        }
    }

    /// Numeric identifier entering seed derivation; frozen.
    pub fn seed_id(self) -> u64 {
        match self {
            ModelKind::Logistic => 0,
            ModelKind::LogisticAic => 1,
            ModelKind::Knn => 2,
            ModelKind::Mlp => 3,
            ModelKind::SvmLinear => 4,
        }
    }
}

/// A trained classifier of any family, ready to score candidate rows.
#[derive(Debug, Clone)]
pub enum FittedModel<F: Real> {
    Logistic(LogisticFit<F>),
    LogisticAic(SelectedLogistic<F>),
    Knn(KnnModel<F>),
    Mlp(MlpModel<F>),
    SvmLinear(SvmModel<F>),
}

impl<F: Real> FittedModel<F> {
    pub fn kind(&self) -> ModelKind {
        match self {
            FittedModel::Logistic(_) => ModelKind::Logistic,
            FittedModel::LogisticAic(_) => ModelKind::LogisticAic,
            FittedModel::Knn(_) => ModelKind::Knn,
            FittedModel::Mlp(_) => ModelKind::Mlp,
            FittedModel::SvmLinear(_) => ModelKind::SvmLinear,
        }
    }

    /// Row width the model was trained on.
    pub fn width(&self) -> usize {
        match self {
            FittedModel::Logistic(fit) => fit.width(),
            FittedModel::LogisticAic(sel) => sel.width(),
            FittedModel::Knn(m) => m.width(),
            FittedModel::Mlp(m) => m.width(),
            FittedModel::SvmLinear(m) => m.width(),
        }
    }

    /// Scores one candidate row; higher means more likely to win. Logistic
    /// and perceptron models return a probability, nearest-neighbors a label
    /// average, the SVM its decision value.
    pub fn score(&self, row: &[F]) -> Result<F, ModelError> {
        if row.len() != self.width() {
            return Err(ModelError::WidthMismatch { expected: self.width(), got: row.len() });
        }
        match self {
            FittedModel::Logistic(fit) => predict_prob(fit, row),
            FittedModel::LogisticAic(sel) => sel.score(row),
            FittedModel::Knn(m) => m.score(row),
            FittedModel::Mlp(m) => Ok(m.forward(row)),
            FittedModel::SvmLinear(m) => Ok(m.decision_value(row)),
        }
    }

    /// Tuned hyperparameter, for families that select one (neighbor count,
    /// hidden size).
    pub fn hyperparam(&self) -> Option<u32> {
        match self {
            FittedModel::Knn(m) => Some(m.l as u32),
            FittedModel::Mlp(m) => Some(m.hidden as u32),
            _ => None,
        }
    }

    /// Whether the underlying optimization met its convergence criterion.
    pub fn converged(&self) -> bool {
        match self {
            FittedModel::Logistic(fit) => fit.converged,
            FittedModel::LogisticAic(sel) => sel.fit.converged,
            FittedModel::Knn(_) => true,
            FittedModel::Mlp(m) => m.converged,
            FittedModel::SvmLinear(m) => m.converged,
        }
    }

    /// JSON description of the fit: family, hyperparameters, coefficients or
    /// weights, and tuning metadata. Nearest-neighbor models describe their
    /// training set by size rather than embedding it.
    pub fn dump_json(&self) -> serde_json::Value {
        let as_f64 = |v: &[F]| -> Vec<f64> { v.iter().map(|x| x.as_f64()).collect() };
        match self {
            FittedModel::Logistic(fit) => serde_json::json!({
                "kind": self.kind().name(),
                "coefficients": as_f64(&fit.beta),
                "std_errors": as_f64(&fit.std_errors),
                "converged": fit.converged,
                "log_likelihood": fit.log_likelihood.as_f64(),
            }),
            FittedModel::LogisticAic(sel) => serde_json::json!({
                "kind": self.kind().name(),
                "selected_columns": sel.mask.clone(),
                "aic": sel.aic,
                "coefficients": as_f64(&sel.fit.beta),
                "std_errors": as_f64(&sel.fit.std_errors),
                "converged": sel.fit.converged,
            }),
            FittedModel::Knn(m) => serde_json::json!({
                "kind": self.kind().name(),
                "neighbors": m.l,
                "training_rows": m.n_rows(),
                "cv_error": m.cv_error,
            }),
            FittedModel::Mlp(m) => serde_json::json!({
                "kind": self.kind().name(),
                "hidden_units": m.hidden,
                "decay": m.decay.as_f64(),
                "hidden_weights": m.w1.iter().map(|x| x.as_f64()).collect::<Vec<_>>(),
                "output_weights": as_f64(&m.w2),
                "converged": m.converged,
                "cv_error": m.cv_error,
            }),
            FittedModel::SvmLinear(m) => serde_json::json!({
                "kind": self.kind().name(),
                "weights": as_f64(&m.weights),
                "bias": m.bias.as_f64(),
                "cost": m.cost.as_f64(),
                "support_vectors": m.n_support(),
                "converged": m.converged,
            }),
        }
    }
}

/// Trains a model of the requested family on a table. `seed` feeds every
/// random choice the family makes (fold assignment, weight initialization),
/// so identical inputs give identical fits.
pub fn train<F: Real>(
    kind: ModelKind,
    table: &TrainingTable<F>,
    seed: u64,
) -> Result<FittedModel<F>, ModelError> {
    match kind {
        ModelKind::Logistic => {
            let fit = fit_logistic(table.features(), table.labels())?;
            Ok(FittedModel::Logistic(fit))
        }
        ModelKind::LogisticAic => {
            let sel = stepwise_aic(table.features(), table.labels())?;
            Ok(FittedModel::LogisticAic(sel))
        }
        ModelKind::Knn => {
            let mut rng = rng::stream(seed, &[StreamTag::FoldAssign as u64, kind.seed_id()]);
            let model = tune_knn(table, KNN_L_MAX, &mut rng)?;
            Ok(FittedModel::Knn(model))
        }
        ModelKind::Mlp => {
            let mut rng = rng::stream(seed, &[StreamTag::ModelInit as u64, kind.seed_id()]);
            let sizes: Vec<usize> = (1..=MLP_SIZE_MAX).collect();
            let model = tune_mlp(table, &sizes, &[0.0], &mut rng)?;
            Ok(FittedModel::Mlp(model))
        }
        ModelKind::SvmLinear => {
            let model = fit_svm_linear(table.features(), table.labels(), F::of(SVM_COST))?;
            Ok(FittedModel::SvmLinear(model))
        }
    }
}

/// Ranks candidate rows by model score, rank 1 for the highest score. Exact
/// score ties are broken uniformly at random from `rng` (one key drawn per
/// candidate, in row order).
pub fn rank_candidates<F: Real>(
    model: &FittedModel<F>,
    candidates: &Array2<F>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>, ModelError> {
    let n = candidates.shape()[0];
    if n == 0 {
        return Err(ModelError::EmptyTable);
    }
    let mut keyed: Vec<(usize, F, u64)> = Vec::with_capacity(n);
    for (j, row) in candidates.rows().into_iter().enumerate() {
        let score = model.score(row.as_slice().expect("candidate rows are contiguous"))?;
        if !score.is_finite() {
            return Err(ModelError::NumericalFailure(format!(
                "non-finite score {score} for candidate {j}"
            )));
        }
        keyed.push((j, score, rng.next_u64()));
    }
    keyed.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("scores are finite").then(a.2.cmp(&b.2)));
    let mut ranks = vec![0usize; n];
    for (pos, &(j, _, _)) in keyed.iter().enumerate() {
        ranks[j] = pos + 1;
    }
    Ok(ranks)
}

/// Assigns each of `n_rows` rows to one of `n_folds` cross-validation folds
/// by shuffling row indices and dealing them round-robin; fold sizes differ
/// by at most one.
pub(crate) fn fold_assignment(n_rows: usize, n_folds: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    assert!(n_folds >= 2 && n_folds <= n_rows, "fold count must lie in [2, n_rows]");
    let mut order: Vec<usize> = (0..n_rows).collect();
    // Fisher-Yates from the stream.
    for i in (1..n_rows).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        order.swap(i, j);
    }
    let mut assignment = vec![0usize; n_rows];
    for (pos, &row) in order.iter().enumerate() {
        assignment[row] = pos % n_folds;
    }
    assignment
}

/// Misclassification rate of thresholded scores against 0/1 labels: a row is
/// predicted positive when its score reaches 1/2.
pub(crate) fn misclassification<F: Real>(scores: &[F], labels: &[u8]) -> f64 {
    assert_eq!(scores.len(), labels.len());
    let half = F::of(0.5);
    let wrong = scores.iter().zip(labels).filter(|&(s, &y)| u8::from(*s >= half) != y).count();
    wrong as f64 / scores.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn toy_table() -> TrainingTable<f64> {
        // Width 2 is one feature per block in the anonymous view.
        let features = array![[0.0, 0.1], [1.0, 0.9], [2.0, 2.1], [3.0, 2.9]];
        TrainingTable::new(features, vec![0, 0, 1, 1], FeatureView::Anonymous, 1)
    }

    #[test]
    fn view_widths() {
        assert_eq!(FeatureView::Full.width(5), 15);
        assert_eq!(FeatureView::Anonymous.width(5), 10);
    }

    #[test]
    fn column_names_and_blocks_line_up() {
        let table = toy_table();
        assert_eq!(table.column_names(), vec!["x1", "z1"]);
        assert_eq!(table.column_blocks(), vec![FeatureBlock::Ability, FeatureBlock::Proxy]);
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in ModelKind::ALL {
            assert_eq!(ModelKind::parse(kind.name()), Some(kind));
        }
        assert_eq!(ModelKind::parse("boosting"), None);
    }

    #[test]
    fn rank_candidates_orders_by_score() {
        let table = toy_table();
        let fit = fit_logistic(table.features(), table.labels()).unwrap();
        let model = FittedModel::Logistic(fit);
        let candidates = array![[3.0, 3.0], [0.0, 0.0], [1.5, 1.5]];
        let mut rng = crate::rng::stream(1, &[StreamTag::Evaluation as u64]);
        let ranks = rank_candidates(&model, &candidates, &mut rng).unwrap();
        assert_eq!(ranks, vec![1, 3, 2]);
    }

    #[test]
    fn rank_candidates_breaks_ties_uniformly() {
        // A zero-coefficient fit scores every candidate identically, so the
        // ranking is decided entirely by the tie keys.
        let fit = LogisticFit {
            beta: vec![0.0, 0.0],
            std_errors: vec![f64::NAN; 2],
            aliased: vec![false; 2],
            converged: true,
            n_iterations: 0,
            log_likelihood: 0.0,
        };
        let model = FittedModel::Logistic(fit);
        let candidates = array![[0.3], [0.7], [0.5]];
        let mut wins = [0u32; 3];
        for trial in 0..9000u64 {
            let mut rng = crate::rng::stream(trial, &[StreamTag::Evaluation as u64]);
            let ranks = rank_candidates(&model, &candidates, &mut rng).unwrap();
            let winner = ranks.iter().position(|&r| r == 1).unwrap();
            wins[winner] += 1;
        }
        for w in wins {
            let rate = w as f64 / 9000.0;
            assert!((rate - 1.0 / 3.0).abs() < 0.02, "tie winner rate {rate}");
        }
    }

    #[test]
    fn rank_candidates_is_invariant_under_monotone_score_transforms() {
        // Ranks depend only on score order, so two fits whose scores are
        // related by a strictly increasing map give identical rankings. The
        // logistic link is itself monotone in the linear predictor; scaling
        // all coefficients by a positive constant preserves order.
        let table = toy_table();
        let fit = fit_logistic(table.features(), table.labels()).unwrap();
        let mut scaled = fit.clone();
        for b in &mut scaled.beta {
            *b *= 2.0;
        }
        let a = FittedModel::Logistic(fit);
        let b = FittedModel::Logistic(scaled);
        let candidates = array![[0.2, 0.4], [2.5, 2.0], [1.0, 1.2], [-1.0, 0.3]];
        let mut rng_a = crate::rng::stream(5, &[0]);
        let mut rng_b = crate::rng::stream(5, &[0]);
        assert_eq!(
            rank_candidates(&a, &candidates, &mut rng_a).unwrap(),
            rank_candidates(&b, &candidates, &mut rng_b).unwrap()
        );
    }

    #[test]
    fn rank_candidates_rejects_wrong_width() {
        let table = toy_table();
        let fit = fit_logistic(table.features(), table.labels()).unwrap();
        let model = FittedModel::Logistic(fit);
        let candidates = array![[1.0, 2.0, 3.0]];
        let mut rng = crate::rng::stream(1, &[0]);
        match rank_candidates(&model, &candidates, &mut rng) {
            Err(ModelError::WidthMismatch { expected: 2, got: 3 }) => {}
            other => panic!("expected width mismatch, got {other:?}"),
        }
    }

    #[test]
    fn fold_assignment_balances_folds() {
        let mut rng = crate::rng::stream(2, &[StreamTag::FoldAssign as u64]);
        let folds = fold_assignment(103, 10, &mut rng);
        let mut counts = [0usize; 10];
        for &f in &folds {
            counts[f] += 1;
        }
        assert_eq!(counts.iter().sum::<usize>(), 103);
        assert!(counts.iter().all(|&c| c == 10 || c == 11));
    }

    #[test]
    fn misclassification_counts_threshold_errors() {
        let scores = [0.9, 0.4, 0.6, 0.1];
        let labels = [1u8, 1, 0, 0];
        // Rows 2 and 3 are wrong: 0.4 < 0.5 misses a winner, 0.6 >= 0.5
        // flags a loser.
        assert!((misclassification(&scores, &labels) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn train_dispatches_every_family() {
        let mut rng = crate::rng::stream(9, &[17]);
        let n = 80;
        let mut feats = Array2::zeros((n, 2));
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let x = crate::rng::gaussian_f64(&mut rng);
            let z = crate::rng::gaussian_f64(&mut rng);
            feats[[i, 0]] = x;
            feats[[i, 1]] = z;
            labels.push(u8::from(x + 0.3 * z > 0.0));
        }
        let table = TrainingTable::new(feats, labels, FeatureView::Anonymous, 1);
        for kind in ModelKind::ALL {
            let model = train(kind, &table, 4242).expect("family trains");
            assert_eq!(model.kind(), kind);
            assert_eq!(model.width(), 2);
            let score = model.score(&[0.5, 0.5]).unwrap();
            assert!(score.is_finite());
            let dump = model.dump_json();
            assert_eq!(dump["kind"], kind.name());
        }
    }
}
