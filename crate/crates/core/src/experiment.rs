//! The factorial benchmark: scenarios x correlations x bias levels x
//! algorithms x feature views x replicates.
//!
//! Each replicate of a (scenario, correlation) pair draws one set of base
//! randomness; every bias level, algorithm, and view inside that replicate
//! reuses it, so comparisons isolate the bias mechanism rather than sampling
//! noise. A cell trains one model per requested label source (perfect and
//! biased rankings of the same methods) and scores both on the same held-out
//! test methods: accuracy is the fraction of test methods whose top-ranked
//! candidate is the true ability winner.
//!
//! Replicates run in parallel; determinism is preserved because every random
//! choice is keyed by value (seed, scenario, correlation, bias, view, label
//! source), never by execution order, and the final record list is sorted
//! canonically.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::models::{
    rank_candidates, train, FeatureView, FittedModel, LabelSource, ModelKind, TrainingTable,
};
use crate::num::Real;
use crate::rng::{self, derive_seed, StreamTag};
use crate::simgen::{
    assemble_dataset, gen_base, threshold_grid, DatasetBundle, RecruitmentMethod, Scenario,
    ScenarioConfig, SimError,
};

/// Default correlation grid between protected and proxy values.
pub const DEFAULT_ALPHAS: [f64; 3] = [0.2, 0.5, 0.8];
/// Default under-reporting shifts for the self-censorship scenario.
pub const DEFAULT_MU_GRID: [f64; 5] = [0.4, 0.8, 1.2, 1.6, 2.0];

/// Errors raised when a plan cannot be executed.
#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentError {
    BadPlan(String),
    Sim(SimError),
}

impl std::fmt::Display for ExperimentError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExperimentError::BadPlan(msg) => write!(f, "invalid experiment plan: {msg}"),
            ExperimentError::Sim(e) => write!(f, "simulation failed: {e}"),
        }
    }
}

impl std::error::Error for ExperimentError {}

impl From<SimError> for ExperimentError {
    fn from(e: SimError) -> Self {
        ExperimentError::Sim(e)
    }
}

/// Full description of a benchmark run. Serialized verbatim into the run
/// manifest so results are self-describing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub scenarios: Vec<Scenario>,
    pub alphas: Vec<f64>,
    /// Replaces the per-scenario default bias grids when set; applies to
    /// every selected scenario.
    pub bias_override: Option<Vec<f64>>,
    pub algorithms: Vec<ModelKind>,
    pub views: Vec<FeatureView>,
    pub label_sources: Vec<LabelSource>,
    pub replicates: usize,
    /// Training methods per dataset.
    pub n_train: usize,
    /// Held-out test methods per dataset.
    pub n_test: usize,
    /// Candidate profiles competing per method.
    pub n_candidates: usize,
    /// Features per block.
    pub k_features: usize,
    pub master_seed: u64,
}

impl ExperimentPlan {
    /// The canonical design: all scenarios, correlations {0.2, 0.5, 0.8},
    /// five bias levels each, all five algorithms, both views, 100
    /// replicates of 5000 training and 500 test candidates. Hours-scale.
    pub fn canonical(master_seed: u64) -> ExperimentPlan {
        ExperimentPlan {
            scenarios: vec![
                Scenario::SelfCensorship,
                Scenario::ThresholdBinary,
                Scenario::ThresholdContinuous,
            ],
            alphas: DEFAULT_ALPHAS.to_vec(),
            bias_override: None,
            algorithms: ModelKind::ALL.to_vec(),
            views: vec![FeatureView::Full, FeatureView::Anonymous],
            label_sources: vec![LabelSource::Perfect, LabelSource::Biased],
            replicates: 100,
            n_train: 5000,
            n_test: 500,
            n_candidates: 5,
            k_features: 5,
            master_seed,
        }
    }

    /// A scaled-down preset for verification runs: 1000 training methods,
    /// 100 test methods, 20 replicates. Same grids as the canonical plan.
    pub fn desk(master_seed: u64) -> ExperimentPlan {
        ExperimentPlan {
            replicates: 20,
            n_train: 1000,
            n_test: 100,
            ..ExperimentPlan::canonical(master_seed)
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let non_empty = [
            (self.scenarios.is_empty(), "scenarios"),
            (self.alphas.is_empty(), "alphas"),
            (self.algorithms.is_empty(), "algorithms"),
            (self.views.is_empty(), "views"),
            (self.label_sources.is_empty(), "label_sources"),
        ];
        for (empty, what) in non_empty {
            if empty {
                return Err(ExperimentError::BadPlan(format!("{what} must not be empty")));
            }
        }
        if let Some(levels) = &self.bias_override {
            if levels.is_empty() {
                return Err(ExperimentError::BadPlan("bias_override must not be empty".into()));
            }
        }
        if self.replicates == 0 {
            return Err(ExperimentError::BadPlan("replicates must be positive".into()));
        }
        if self.n_train == 0 || self.n_test == 0 {
            return Err(ExperimentError::BadPlan("n_train and n_test must be positive".into()));
        }
        for &alpha in &self.alphas {
            if !(0.0..1.0).contains(&alpha) {
                return Err(ExperimentError::BadPlan(format!(
                    "alpha must lie in [0, 1), got {alpha}"
                )));
            }
        }
        // Reuse the per-dataset validation for the rest of the fields.
        for &scenario in &self.scenarios {
            for cell in self.scenario_cells(scenario)? {
                self.dataset_config(&cell, 0).validate()?;
            }
        }
        Ok(())
    }

    /// Default bias grid for one scenario under this plan's block size.
    pub fn default_bias_grid(scenario: Scenario, k: usize) -> Result<Vec<f64>, SimError> {
        match scenario {
            Scenario::SelfCensorship => Ok(DEFAULT_MU_GRID.to_vec()),
            Scenario::ThresholdBinary => Ok(threshold_grid(k)?.binary),
            Scenario::ThresholdContinuous => Ok(threshold_grid(k)?.continuous),
        }
    }

    fn scenario_cells(&self, scenario: Scenario) -> Result<Vec<PlanCell>, ExperimentError> {
        let levels = match &self.bias_override {
            Some(levels) => levels.clone(),
            None => Self::default_bias_grid(scenario, self.k_features)?,
        };
        let probs: Vec<Option<f64>> = match (scenario, &self.bias_override) {
            // The default threshold grids carry their exact censoring
            // probabilities; overrides and the self-censorship shift do not.
            (Scenario::ThresholdBinary | Scenario::ThresholdContinuous, None) => {
                threshold_grid(self.k_features)?.rejection_probs.into_iter().map(Some).collect()
            }
            _ => vec![None; levels.len()],
        };
        let mut cells = Vec::new();
        for &alpha in &self.alphas {
            for (level, prob) in levels.iter().zip(&probs) {
                cells.push(PlanCell { scenario, alpha, bias_level: *level, rejection_prob: *prob });
            }
        }
        Ok(cells)
    }

    /// Every (scenario, alpha, bias level) combination, in canonical order.
    pub fn cells(&self) -> Result<Vec<PlanCell>, ExperimentError> {
        let mut cells = Vec::new();
        for &scenario in &self.scenarios {
            cells.extend(self.scenario_cells(scenario)?);
        }
        Ok(cells)
    }

    /// Total records a full run produces.
    pub fn record_count(&self) -> Result<usize, ExperimentError> {
        Ok(self.cells()?.len() * self.algorithms.len() * self.views.len() * self.replicates)
    }

    /// Dataset configuration for one cell and replicate.
    /// The scenario configuration backing one cell's replicate: plan sizes,
    /// the cell's bias parameters, and the derived per-replicate seed.
    pub fn dataset_config(&self, cell: &PlanCell, replicate: usize) -> ScenarioConfig {
        ScenarioConfig {
            scenario: cell.scenario,
            alpha: cell.alpha,
            bias_param: cell.bias_level,
            n_train: self.n_train,
            n_test: self.n_test,
            n_candidates: self.n_candidates,
            k_features: self.k_features,
            master_seed: replicate_seed(self.master_seed, cell.scenario, cell.alpha, replicate),
        }
    }
}

/// One (scenario, correlation, bias level) combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanCell {
    pub scenario: Scenario,
    pub alpha: f64,
    pub bias_level: f64,
    /// Probability that a profile is censored at this level; known exactly
    /// for the default threshold grids, absent otherwise.
    pub rejection_prob: Option<f64>,
}

/// Seed of one replicate's base randomness. Hashes the scenario and the
/// correlation but *not* the bias level or view, so all bias levels of a
/// replicate share their draws.
pub fn replicate_seed(master_seed: u64, scenario: Scenario, alpha: f64, replicate: usize) -> u64 {
    derive_seed(
        master_seed,
        &[StreamTag::Replicate as u64, scenario.seed_id(), alpha.to_bits(), replicate as u64],
    )
}

/// Result of one cell evaluation: both label sources of one (cell,
/// algorithm, view, replicate) combination, scored on the same test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub scenario: Scenario,
    pub alpha: f64,
    pub bias_level: f64,
    pub rejection_prob: Option<f64>,
    pub algorithm: ModelKind,
    pub view: FeatureView,
    pub replicate: usize,
    /// Top-1 accuracy of the model trained on perfect labels; absent when
    /// that training failed or was not requested.
    pub acc_perfect: Option<f64>,
    /// Top-1 accuracy of the model trained on biased labels.
    pub acc_biased: Option<f64>,
    /// Tuned hyperparameter (neighbor count or hidden size) of the
    /// biased-label fit, falling back to the perfect-label fit when only
    /// that one was trained.
    pub hyperparam: Option<u32>,
    /// Whether every trained fit met its convergence criterion.
    pub converged: bool,
    /// First fitting error encountered, if any; the record then carries no
    /// accuracy for the failed label source.
    pub error: Option<String>,
}

impl EvalRecord {
    /// Canonical ordering key: scenario, alpha, bias level, algorithm,
    /// view, replicate.
    pub fn sort_key(&self) -> (u64, u64, u64, u64, u64, usize) {
        (
            self.scenario.seed_id(),
            total_order_key(self.alpha),
            total_order_key(self.bias_level),
            self.algorithm.seed_id(),
            self.view.seed_id(),
            self.replicate,
        )
    }
}

/// Monotone map from f64 to u64: preserves ordering including negatives.
fn total_order_key(x: f64) -> u64 {
    let bits = x.to_bits();
    if bits >> 63 == 0 {
        bits | (1 << 63)
    } else {
        !bits
    }
}

/// One coefficient of a logistic-family fit, kept for the model-reading
/// analysis (which variables a biased learner leans on).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoeffRecord {
    pub scenario: Scenario,
    pub alpha: f64,
    pub bias_level: f64,
    pub algorithm: ModelKind,
    pub view: FeatureView,
    pub replicate: usize,
    pub label_source: LabelSource,
    /// "(intercept)" or a column name (`x1`, `y2`, `z5`, ...). Terms the
    /// stepwise search dropped are simply absent.
    pub term: String,
    pub estimate: f64,
    /// Absent for aliased columns.
    pub std_error: Option<f64>,
    pub p_value: Option<f64>,
}

impl CoeffRecord {
    pub fn sort_key(&self) -> (u64, u64, u64, u64, u64, usize, u64) {
        (
            self.scenario.seed_id(),
            total_order_key(self.alpha),
            total_order_key(self.bias_level),
            self.algorithm.seed_id(),
            self.view.seed_id(),
            self.replicate,
            self.label_source.seed_id(),
        )
    }
}

/// Everything a run produces, canonically sorted.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOutput {
    pub records: Vec<EvalRecord>,
    pub coefficients: Vec<CoeffRecord>,
}

impl RunOutput {
    /// Number of records whose fits failed.
    pub fn failure_count(&self) -> usize {
        self.records.iter().filter(|r| r.error.is_some()).count()
    }
}

/// Fraction of test methods whose top-ranked candidate equals the true
/// ability winner. Ties in model scores are broken from `rng`, one draw per
/// candidate per method, in method order.
pub fn evaluate_accuracy<F: Real>(
    model: &FittedModel<F>,
    test_methods: &[RecruitmentMethod<F>],
    view: FeatureView,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<f64, ExperimentError> {
    assert!(!test_methods.is_empty(), "accuracy needs at least one test method");
    let mut hits = 0usize;
    for method in test_methods {
        let features = method.prediction_features(view);
        let ranks = rank_candidates(model, &features, rng)
            .map_err(|e| ExperimentError::BadPlan(format!("scoring failed: {e}")))?;
        let predicted = ranks.iter().position(|&r| r == 1).expect("rank 1 always exists");
        if predicted == method.perfect_winner() {
            hits += 1;
        }
    }
    Ok(hits as f64 / test_methods.len() as f64)
}

/// Trains one (algorithm, view, label source) fit of an assembled dataset
/// and scores it. Returns the fit for diagnostics alongside the accuracy.
fn train_and_score<F: Real>(
    plan: &ExperimentPlan,
    cell: &PlanCell,
    dataset: &DatasetBundle<F>,
    algorithm: ModelKind,
    view: FeatureView,
    label: LabelSource,
    replicate: usize,
) -> Result<(FittedModel<F>, f64), String> {
    let rep_seed = replicate_seed(plan.master_seed, cell.scenario, cell.alpha, replicate);
    let table = dataset.training_table(view, label);
    let train_seed =
        derive_seed(rep_seed, &[cell.bias_level.to_bits(), view.seed_id(), label.seed_id()]);
    let model = train(algorithm, &table, train_seed)
        .map_err(|e| format!("{} {} {}: {e}", algorithm.name(), view.name(), label.name()))?;
    let mut eval_rng = rng::stream(
        rep_seed,
        &[
            StreamTag::Evaluation as u64,
            cell.bias_level.to_bits(),
            algorithm.seed_id(),
            view.seed_id(),
            label.seed_id(),
        ],
    );
    let accuracy = evaluate_accuracy(&model, &dataset.test_methods, view, &mut eval_rng)
        .map_err(|e| e.to_string())?;
    Ok((model, accuracy))
}

/// Coefficient rows of a logistic-family fit, in fit order.
fn coefficient_rows<F: Real>(
    model: &FittedModel<F>,
    table: &TrainingTable<F>,
    cell: &PlanCell,
    view: FeatureView,
    replicate: usize,
    label: LabelSource,
) -> Vec<CoeffRecord> {
    let (names, beta, se, pvals): (Vec<String>, Vec<F>, Vec<F>, Vec<Option<f64>>) = match model {
        FittedModel::Logistic(fit) => {
            let mut names = vec!["(intercept)".to_string()];
            names.extend(table.column_names());
            (names, fit.beta.clone(), fit.std_errors.clone(), crate::models::wald_pvalues(fit))
        }
        FittedModel::LogisticAic(sel) => {
            let mut names = vec!["(intercept)".to_string()];
            names.extend(sel.selected_names(&table.column_names()));
            (
                names,
                sel.fit.beta.clone(),
                sel.fit.std_errors.clone(),
                crate::models::wald_pvalues(&sel.fit),
            )
        }
        _ => return Vec::new(),
    };
    names
        .into_iter()
        .zip(beta)
        .zip(se.into_iter().zip(pvals))
        .map(|((term, est), (se, p))| CoeffRecord {
            scenario: cell.scenario,
            alpha: cell.alpha,
            bias_level: cell.bias_level,
            algorithm: model.kind(),
            view,
            replicate,
            label_source: label,
            term,
            estimate: est.as_f64(),
            std_error: if se.is_finite() { Some(se.as_f64()) } else { None },
            p_value: p,
        })
        .collect()
}

/// Runs one (cell, algorithm, view, replicate) combination from scratch:
/// generates the replicate's base randomness, assembles the dataset at the
/// cell's bias level, trains every requested label source, and scores each
/// on the shared test methods.
pub fn run_cell<F: Real>(
    plan: &ExperimentPlan,
    cell: &PlanCell,
    algorithm: ModelKind,
    view: FeatureView,
    replicate: usize,
) -> Result<(EvalRecord, Vec<CoeffRecord>), ExperimentError> {
    let config = plan.dataset_config(cell, replicate);
    let train_base = gen_base::<F>(&config, config.n_train, StreamTag::TrainBase)?;
    let test_base = gen_base::<F>(&config, config.n_test, StreamTag::TestBase)?;
    let dataset = assemble_dataset(&config, &train_base, &test_base)?;
    Ok(cell_record(plan, cell, &dataset, algorithm, view, replicate))
}

/// The cell computation proper, shared by [`run_cell`] and the batched plan
/// runner. Never fails: fitting errors are recorded in the output.
fn cell_record<F: Real>(
    plan: &ExperimentPlan,
    cell: &PlanCell,
    dataset: &DatasetBundle<F>,
    algorithm: ModelKind,
    view: FeatureView,
    replicate: usize,
) -> (EvalRecord, Vec<CoeffRecord>) {
    let mut acc_perfect = None;
    let mut acc_biased = None;
    let mut hyperparam = None;
    let mut converged = true;
    let mut error = None;
    let mut coeffs = Vec::new();

    for &label in &plan.label_sources {
        match train_and_score(plan, cell, dataset, algorithm, view, label, replicate) {
            Ok((model, accuracy)) => {
                match label {
                    LabelSource::Perfect => acc_perfect = Some(accuracy),
                    LabelSource::Biased => acc_biased = Some(accuracy),
                }
                // The biased fit's hyperparameter wins when both are trained
                // (label_sources lists perfect before biased in presets).
                if model.hyperparam().is_some() {
                    hyperparam = model.hyperparam();
                }
                converged &= model.converged();
                let table = dataset.training_table(view, label);
                coeffs.extend(coefficient_rows(&model, &table, cell, view, replicate, label));
            }
            Err(msg) => {
                converged = false;
                if error.is_none() {
                    error = Some(msg);
                }
            }
        }
    }

    let record = EvalRecord {
        scenario: cell.scenario,
        alpha: cell.alpha,
        bias_level: cell.bias_level,
        rejection_prob: cell.rejection_prob,
        algorithm,
        view,
        replicate,
        acc_perfect,
        acc_biased,
        hyperparam,
        converged,
        error,
    };
    (record, coeffs)
}

/// Runs the whole plan in parallel and returns canonically sorted output.
pub fn run_plan<F: Real>(plan: &ExperimentPlan) -> Result<RunOutput, ExperimentError> {
    run_plan_streaming::<F>(plan, |_| {})
}

/// As [`run_plan`], invoking `on_record` as each record completes (in
/// nondeterministic completion order; the returned output is sorted).
pub fn run_plan_streaming<F: Real>(
    plan: &ExperimentPlan,
    on_record: impl Fn(&EvalRecord) + Sync,
) -> Result<RunOutput, ExperimentError> {
    plan.validate()?;
    let cells = plan.cells()?;

    // One work unit per (scenario, alpha, replicate): base randomness is
    // drawn once and reused by every bias level, algorithm, and view.
    let mut bundles: Vec<(Scenario, f64, usize)> = Vec::new();
    for &scenario in &plan.scenarios {
        for &alpha in &plan.alphas {
            for replicate in 0..plan.replicates {
                bundles.push((scenario, alpha, replicate));
            }
        }
    }

    let outputs: Vec<Result<RunOutput, ExperimentError>> = bundles
        .par_iter()
        .map(|&(scenario, alpha, replicate)| {
            let mut out = RunOutput::default();
            let scenario_cells: Vec<&PlanCell> =
                cells.iter().filter(|c| c.scenario == scenario && c.alpha == alpha).collect();
            // All cells here share base randomness; draw it once.
            let mut base: Option<(_, _)> = None;
            for cell in scenario_cells {
                let config = plan.dataset_config(cell, replicate);
                if base.is_none() {
                    let train = gen_base::<F>(&config, config.n_train, StreamTag::TrainBase)?;
                    let test = gen_base::<F>(&config, config.n_test, StreamTag::TestBase)?;
                    base = Some((train, test));
                }
                let (train_base, test_base) = base.as_ref().expect("base drawn above");
                let dataset = assemble_dataset(&config, train_base, test_base)?;
                for &algorithm in &plan.algorithms {
                    for &view in &plan.views {
                        let (record, coeffs) =
                            cell_record(plan, cell, &dataset, algorithm, view, replicate);
                        on_record(&record);
                        out.records.push(record);
                        out.coefficients.extend(coeffs);
                    }
                }
            }
            Ok(out)
        })
        .collect();

    let mut merged = RunOutput::default();
    for out in outputs {
        let out = out?;
        merged.records.extend(out.records);
        merged.coefficients.extend(out.coefficients);
    }
    merged.records.sort_by_key(EvalRecord::sort_key);
    merged.coefficients.sort_by_key(|a| a.sort_key());
    Ok(merged)
}
