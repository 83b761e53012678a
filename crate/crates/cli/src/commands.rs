//! The five subcommands: dataset export, hyperparameter calibration, the
//! sweep itself, table aggregation, and figure rendering.
//!
//! Every command is deterministic given its inputs except for the
//! `wall_time_seconds` field of the run manifest; re-running a command over
//! the same settings rewrites its output files with identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Instant;

use fairsim_core::analysis::{self, CoeffRow, KnnRow};
use fairsim_core::calibrate::{self, CalibrationOutcome, CalibrationReport};
use fairsim_core::dataio::{self, EllipseEntry, RunManifest, SummaryRow, FORMAT_VERSION};
use fairsim_core::experiment::{self, EvalRecord, ExperimentPlan, PlanCell};
use fairsim_core::models::{FeatureView, LabelSource, ModelKind};
use fairsim_core::rng::StreamTag;
use fairsim_core::simgen::{self, Scenario};
use fairsim_core::Scalar;

use crate::config::{restrict_to_cell, CellSpec, CliError, Settings};
use crate::svg::{self, BoxGroup, Panel};

/// Applies an optional cell restriction, validates, and returns the first
/// grid cell — the one `generate` and `calibrate` operate on.
fn first_cell(plan: &mut ExperimentPlan, cell: Option<&CellSpec>) -> Result<PlanCell, CliError> {
    if let Some(c) = cell {
        restrict_to_cell(plan, c);
    }
    plan.validate()?;
    let cells = plan.cells()?;
    cells.first().copied().ok_or_else(|| CliError::Config("the plan selects no cells".into()))
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

/// Simulates replicate 0 of one cell and writes its training tables (every
/// view × label-source combination) plus the held-out test profiles as CSV.
pub fn cmd_generate(mut settings: Settings, cell: Option<CellSpec>) -> Result<(), CliError> {
    let target = first_cell(&mut settings.plan, cell.as_ref())?;
    let config = settings.plan.dataset_config(&target, 0);
    let train = simgen::gen_base::<Scalar>(&config, config.n_train, StreamTag::TrainBase)?;
    let test = simgen::gen_base::<Scalar>(&config, config.n_test, StreamTag::TestBase)?;
    let bundle = simgen::assemble_dataset(&config, &train, &test)?;
    let dir = settings.out_dir.join("dataset");
    dataio::write_dataset(&dir, &bundle)?;
    println!(
        "wrote dataset ({} train + {} test methods, {} candidates each) \
         for {} alpha={} bias={} to {}",
        config.n_train,
        config.n_test,
        config.n_candidates,
        target.scenario.name(),
        target.alpha,
        target.bias_level,
        dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// calibrate
// ---------------------------------------------------------------------------

/// Re-runs one hyperparameter calibration protocol on freshly simulated
/// matrices drawn from the plan's first cell, writes the full report as
/// JSON, and prints the outcome distribution.
pub fn cmd_calibrate(
    mut settings: Settings,
    protocol: &str,
    matrices: usize,
) -> Result<(), CliError> {
    let target = first_cell(&mut settings.plan, None)?;
    let config = settings.plan.dataset_config(&target, 0);
    println!(
        "calibrating `{protocol}` on {matrices} matrices of {} methods \
         ({} alpha={} bias={})",
        config.n_train,
        target.scenario.name(),
        target.alpha,
        target.bias_level
    );
    let report = calibrate::calibrate::<Scalar>(protocol, &config, matrices)?;
    fs::create_dir_all(&settings.out_dir)?;
    let path = settings.out_dir.join(format!("calibration-{protocol}.json"));
    let text = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Runtime(format!("serializing calibration report: {e}")))?;
    dataio::write_text(&path, &format!("{text}\n"))?;
    print!("{}", calibration_summary(&report));
    println!("wrote {}", path.display());
    Ok(())
}

/// Human-readable distribution of calibration outcomes.
fn calibration_summary(report: &CalibrationReport) -> String {
    let mut out = String::new();
    let total = report.outcomes.len();
    match report.protocol.as_str() {
        "knn" => {
            let mut ls: Vec<usize> = report
                .outcomes
                .iter()
                .map(|o| match o {
                    CalibrationOutcome::Knn { l, .. } => *l,
                    _ => unreachable!("knn report carries knn outcomes"),
                })
                .collect();
            ls.sort_unstable();
            if !ls.is_empty() {
                let _ = writeln!(
                    out,
                    "neighbor count over {total} matrices: min {}, median {}, max {}",
                    ls[0],
                    ls[ls.len() / 2],
                    ls[ls.len() - 1]
                );
            }
        }
        "mlp" => {
            let mut counts: BTreeMap<(usize, String), usize> = BTreeMap::new();
            let mut errs: Vec<f64> = Vec::new();
            for o in &report.outcomes {
                if let CalibrationOutcome::Mlp { hidden, decay, cv_error } = o {
                    *counts.entry((*hidden, format!("{decay}"))).or_default() += 1;
                    errs.push(*cv_error);
                }
            }
            let mut ranked: Vec<_> = counts.into_iter().collect();
            ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            for ((hidden, decay), n) in ranked {
                let _ =
                    writeln!(out, "hidden {hidden}, decay {decay}: chosen by {n}/{total} matrices");
            }
            if let Some(mean) =
                (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / errs.len() as f64)
            {
                let _ = writeln!(out, "mean cross-validated error {mean:.4}");
            }
        }
        _ => {
            let mut counts: BTreeMap<String, usize> = BTreeMap::new();
            for o in &report.outcomes {
                if let CalibrationOutcome::SvmKernel { kernel, .. } = o {
                    *counts.entry(kernel.clone()).or_default() += 1;
                }
            }
            let mut ranked: Vec<_> = counts.into_iter().collect();
            ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            for (kernel, n) in ranked {
                let _ = writeln!(out, "kernel {kernel}: best on {n}/{total} matrices");
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

struct Progress {
    writer: csv::Writer<fs::File>,
    // (scenario name, alpha bits, bias bits) -> finished fits in that cell.
    done: BTreeMap<(&'static str, u64, u64), usize>,
    per_cell: usize,
    finished_cells: usize,
    n_cells: usize,
}

/// Executes the sweep, streaming each finished record to
/// `results.partial.csv` and a per-cell progress line to stderr, then writes
/// the canonical `results.csv`, `diagnostics.csv`, and `manifest.json` and
/// removes the partial file.
pub fn cmd_run(mut settings: Settings, cell: Option<CellSpec>) -> Result<(), CliError> {
    if let Some(c) = &cell {
        restrict_to_cell(&mut settings.plan, c);
    }
    settings.plan.validate()?;
    let cells = settings.plan.cells()?;
    let per_cell =
        settings.plan.algorithms.len() * settings.plan.views.len() * settings.plan.replicates;
    eprintln!(
        "running {} cells x {} fits = {} records ({} replicates each)",
        cells.len(),
        per_cell,
        cells.len() * per_cell,
        settings.plan.replicates
    );

    fs::create_dir_all(&settings.out_dir)?;
    let partial_path = settings.out_dir.join("results.partial.csv");
    let writer = csv::Writer::from_path(&partial_path)
        .map_err(|e| CliError::Runtime(format!("opening {}: {e}", partial_path.display())))?;
    let progress = Mutex::new(Progress {
        writer,
        done: BTreeMap::new(),
        per_cell,
        finished_cells: 0,
        n_cells: cells.len(),
    });

    let started = Instant::now();
    let output = experiment::run_plan_streaming::<Scalar>(&settings.plan, |record| {
        let mut p = progress.lock().expect("progress lock");
        // Best-effort: the partial file exists for crash inspection only.
        let _ = p.writer.serialize(record);
        let key = (record.scenario.name(), record.alpha.to_bits(), record.bias_level.to_bits());
        let finished = {
            let n = p.done.entry(key).or_insert(0);
            *n += 1;
            *n
        };
        if finished == p.per_cell {
            p.finished_cells += 1;
            eprintln!(
                "  cell {}/{} done: {} alpha={} bias={}",
                p.finished_cells,
                p.n_cells,
                record.scenario.name(),
                record.alpha,
                record.bias_level
            );
        }
    })?;

    let mut p = progress.into_inner().expect("progress lock");
    p.writer.flush().map_err(|e| CliError::Runtime(format!("flushing partial results: {e}")))?;
    drop(p);

    dataio::write_results(&settings.out_dir.join("results.csv"), &output.records)?;
    dataio::write_diagnostics(&settings.out_dir.join("diagnostics.csv"), &output.coefficients)?;
    let manifest = RunManifest {
        format_version: FORMAT_VERSION,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        plan: settings.plan.clone(),
        n_records: output.records.len(),
        failures: RunManifest::failure_notes(&output.records),
        wall_time_seconds: started.elapsed().as_secs_f64(),
    };
    dataio::write_manifest(&settings.out_dir.join("manifest.json"), &manifest)?;
    let _ = fs::remove_file(&partial_path);

    println!(
        "finished {} records ({} failed fits) in {:.1}s",
        output.records.len(),
        output.failure_count(),
        manifest.wall_time_seconds
    );
    println!("wrote results.csv, diagnostics.csv, manifest.json to {}", settings.out_dir.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

fn require(path: PathBuf, hint: &str) -> Result<PathBuf, CliError> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::Runtime(format!("{} not found — {hint}", path.display())))
    }
}

/// Aggregates `results.csv` (and `diagnostics.csv` when present) into the
/// summary, ellipse, coefficient, and neighbor-count tables. Empty inputs
/// produce empty outputs and succeed.
pub fn cmd_analyze(settings: Settings) -> Result<(), CliError> {
    let dir = &settings.out_dir;
    let results_path = require(dir.join("results.csv"), "run `fairsim run` first")?;
    let records = dataio::read_results(&results_path)?;
    let diag_path = dir.join("diagnostics.csv");
    let coeffs =
        if diag_path.exists() { dataio::read_diagnostics(&diag_path)? } else { Vec::new() };

    let cells = analysis::summarize(&records);
    dataio::write_summary(dir, &cells)?;
    let coeff_rows = analysis::coefficient_tables(&coeffs);
    dataio::write_coefficient_rows(&dir.join("coefficients.csv"), &coeff_rows)?;
    let knn_rows = analysis::knn_l_table(&records);
    dataio::write_knn_rows(&dir.join("knn_L.csv"), &knn_rows)?;

    println!(
        "summarized {} records into {} cells ({} with ellipse fits)",
        records.len(),
        cells.len(),
        cells.iter().filter(|c| c.ellipse.is_some()).count()
    );
    println!(
        "wrote summary.csv, ellipses.json, coefficients.csv ({} rows), knn_L.csv ({} rows) to {}",
        coeff_rows.len(),
        knn_rows.len(),
        dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// plot
// ---------------------------------------------------------------------------

/// Renders the figures: one accuracy scatter grid per algorithm × scenario,
/// coefficient and p-value boxplots per scenario, and a tuned-neighbor-count
/// boxplot per scenario. Needs the tables `analyze` writes.
pub fn cmd_plot(settings: Settings) -> Result<(), CliError> {
    let dir = &settings.out_dir;
    let records =
        dataio::read_results(&require(dir.join("results.csv"), "run `fairsim run` first")?)?;
    let summary =
        dataio::read_summary(&require(dir.join("summary.csv"), "run `fairsim analyze` first")?)?;
    let ellipses =
        dataio::read_ellipses(&require(dir.join("ellipses.json"), "run `fairsim analyze` first")?)?;
    let coeff_path = dir.join("coefficients.csv");
    let coeffs =
        if coeff_path.exists() { dataio::read_coefficient_rows(&coeff_path)? } else { Vec::new() };
    let knn_path = dir.join("knn_L.csv");
    let knns = if knn_path.exists() { dataio::read_knn_rows(&knn_path)? } else { Vec::new() };

    let plots_dir = dir.join("plots");
    fs::create_dir_all(&plots_dir)?;
    let mut written: Vec<String> = Vec::new();
    let mut emit = |name: String, content: String| -> Result<(), CliError> {
        dataio::write_text(&plots_dir.join(&name), &content)?;
        written.push(name);
        Ok(())
    };

    for (algorithm, scenario) in algorithm_scenario_pairs(&records) {
        if let Some(svg) = scatter_grid_for(&records, &summary, &ellipses, algorithm, scenario) {
            emit(format!("scatter-{}-{}.svg", algorithm.name(), scenario.name()), svg)?;
        }
    }
    for scenario in scenarios_of_coeffs(&coeffs) {
        let (estimates, pvalues) = coefficient_figures(&coeffs, scenario);
        if let Some(svg) = estimates {
            emit(format!("coefficients-{}.svg", scenario.name()), svg)?;
        }
        if let Some(svg) = pvalues {
            emit(format!("pvalues-{}.svg", scenario.name()), svg)?;
        }
    }
    for scenario in scenarios_of_knns(&knns) {
        if let Some(svg) = knn_figure(&knns, scenario) {
            emit(format!("knn-l-{}.svg", scenario.name()), svg)?;
        }
    }

    if written.is_empty() {
        println!("nothing to plot: the tables hold no complete records");
    } else {
        println!("wrote {} figures to {}", written.len(), plots_dir.display());
        for name in &written {
            println!("  {name}");
        }
    }
    Ok(())
}

/// Distinct (algorithm, scenario) pairs in first-appearance order of the
/// sorted record table.
fn algorithm_scenario_pairs(records: &[EvalRecord]) -> Vec<(ModelKind, Scenario)> {
    let mut seen: Vec<(ModelKind, Scenario)> = Vec::new();
    for r in records {
        if !seen.contains(&(r.algorithm, r.scenario)) {
            seen.push((r.algorithm, r.scenario));
        }
    }
    seen
}

fn sorted_distinct(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| a.to_bits() == b.to_bits());
    v
}

fn algorithm_title(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Logistic => "logistic regression",
        ModelKind::LogisticAic => "stepwise logistic regression",
        ModelKind::Knn => "nearest neighbors",
        ModelKind::Mlp => "neural network",
        ModelKind::SvmLinear => "linear support vector machine",
    }
}

fn scenario_title(scenario: Scenario) -> &'static str {
    match scenario {
        Scenario::ThresholdBinary => "binary protected attribute, external censoring",
        Scenario::ThresholdContinuous => "continuous protected attribute, external censoring",
        Scenario::SelfCensorship => "self-censorship",
    }
}

/// Column label for one bias level: the scenario's parameter name, the
/// value, and the exact censoring rate when it is known.
fn bias_label(scenario: Scenario, bias: f64, rejection: Option<f64>) -> String {
    let name = match scenario {
        Scenario::SelfCensorship => "shift",
        _ => "threshold",
    };
    match rejection {
        Some(p) => {
            let pct = p * 100.0;
            if (pct - pct.round()).abs() < 5e-3 {
                format!("{name} {bias} ({}% cut)", pct.round() as i64)
            } else {
                format!("{name} {bias} ({pct:.1}% cut)")
            }
        }
        None => format!("{name} {bias}"),
    }
}

/// Builds one scatter grid (rows: proxy correlations ascending; columns:
/// bias levels ascending) or `None` when no panel has a complete point.
fn scatter_grid_for(
    records: &[EvalRecord],
    summary: &[SummaryRow],
    ellipses: &[EllipseEntry],
    algorithm: ModelKind,
    scenario: Scenario,
) -> Option<String> {
    let ours: Vec<&EvalRecord> =
        records.iter().filter(|r| r.algorithm == algorithm && r.scenario == scenario).collect();
    let alphas = sorted_distinct(ours.iter().map(|r| r.alpha));
    let biases = sorted_distinct(ours.iter().map(|r| r.bias_level));
    if alphas.is_empty() || biases.is_empty() {
        return None;
    }

    let row_labels: Vec<String> = alphas.iter().map(|a| format!("α = {a}")).collect();
    let col_labels: Vec<String> = biases
        .iter()
        .map(|&b| {
            let rejection = ours
                .iter()
                .find(|r| r.bias_level.to_bits() == b.to_bits() && r.rejection_prob.is_some())
                .and_then(|r| r.rejection_prob);
            bias_label(scenario, b, rejection)
        })
        .collect();

    let mut panels = Vec::with_capacity(alphas.len() * biases.len());
    let mut any_points = false;
    for &alpha in &alphas {
        for &bias in &biases {
            let in_cell =
                |a: f64, b: f64| a.to_bits() == alpha.to_bits() && b.to_bits() == bias.to_bits();
            let mut panel = Panel::default();
            for r in &ours {
                if in_cell(r.alpha, r.bias_level) {
                    if let (Some(ap), Some(ab)) = (r.acc_perfect, r.acc_biased) {
                        panel.points.push((ap, ab, r.view));
                    }
                }
            }
            for s in summary {
                if s.algorithm == algorithm
                    && s.scenario == scenario
                    && in_cell(s.alpha, s.bias_level)
                {
                    if let (Some(mp), Some(mb)) = (s.mean_acc_perfect, s.mean_acc_biased) {
                        panel.means.push((mp, mb, s.view));
                    }
                }
            }
            for e in ellipses {
                if e.algorithm == algorithm
                    && e.scenario == scenario
                    && in_cell(e.alpha, e.bias_level)
                {
                    panel.ellipses.push((e.ellipse, e.view));
                }
            }
            any_points |= !panel.points.is_empty();
            panels.push(panel);
        }
    }
    if !any_points {
        return None;
    }
    let title = format!("{} — {}", algorithm_title(algorithm), scenario_title(scenario));
    Some(svg::scatter_grid(&title, &row_labels, &col_labels, &panels))
}

fn scenarios_of_coeffs(rows: &[CoeffRow]) -> Vec<Scenario> {
    let mut seen = Vec::new();
    for r in rows {
        if !seen.contains(&r.scenario) {
            seen.push(r.scenario);
        }
    }
    seen
}

fn scenarios_of_knns(rows: &[KnnRow]) -> Vec<Scenario> {
    let mut seen = Vec::new();
    for r in rows {
        if !seen.contains(&r.scenario) {
            seen.push(r.scenario);
        }
    }
    seen
}

/// Sort key placing terms in block order (intercept, ability, protected,
/// proxy) with numeric suffixes ascending inside each block.
fn term_order(term: &str, block: &str) -> (u8, u32) {
    let rank = match block {
        "intercept" => 0,
        "ability" => 1,
        "protected" => 2,
        "proxy" => 3,
        _ => 4,
    };
    let suffix = term.get(1..).and_then(|s| s.parse::<u32>().ok()).unwrap_or(0);
    (rank, suffix)
}

/// Coefficient-estimate and p-value boxplots for one scenario, restricted to
/// biased-label fits at the scenario's heaviest bias level (where the
/// protected terms matter most), pooling proxy correlations and replicates.
/// Plain logistic fits are preferred; the stepwise variant is the fallback.
fn coefficient_figures(rows: &[CoeffRow], scenario: Scenario) -> (Option<String>, Option<String>) {
    let in_scenario: Vec<&CoeffRow> = rows
        .iter()
        .filter(|r| r.scenario == scenario && r.label_source == LabelSource::Biased)
        .collect();
    let algorithm = if in_scenario.iter().any(|r| r.algorithm == ModelKind::Logistic) {
        ModelKind::Logistic
    } else if in_scenario.iter().any(|r| r.algorithm == ModelKind::LogisticAic) {
        ModelKind::LogisticAic
    } else {
        return (None, None);
    };
    let heaviest = match in_scenario
        .iter()
        .filter(|r| r.algorithm == algorithm)
        .map(|r| r.bias_level)
        .max_by(f64::total_cmp)
    {
        Some(b) => b,
        None => return (None, None),
    };
    let slice: Vec<&CoeffRow> = in_scenario
        .into_iter()
        .filter(|r| r.algorithm == algorithm && r.bias_level.to_bits() == heaviest.to_bits())
        .collect();

    // Terms present anywhere in the slice, in block order.
    let mut terms: Vec<(String, String)> = Vec::new();
    for r in &slice {
        if !terms.iter().any(|(t, _)| *t == r.term) {
            terms.push((r.term.clone(), r.block.clone()));
        }
    }
    terms.sort_by_key(|(t, b)| term_order(t, b));
    if terms.is_empty() {
        return (None, None);
    }

    let collect = |value: &dyn Fn(&CoeffRow) -> Option<f64>| -> Vec<BoxGroup> {
        terms
            .iter()
            .map(|(term, _)| BoxGroup {
                label: term.clone(),
                series: [FeatureView::Full, FeatureView::Anonymous]
                    .into_iter()
                    .map(|view| {
                        let values: Vec<f64> = slice
                            .iter()
                            .filter(|r| r.view == view && r.term == *term)
                            .filter_map(|r| value(r))
                            .collect();
                        (view, values)
                    })
                    .collect(),
            })
            .collect()
    };

    let subtitle = format!(
        "{}, biased labels, {} (proxy correlations pooled)",
        algorithm_title(algorithm),
        bias_label(scenario, heaviest, None)
    );
    let estimates = collect(&|r: &CoeffRow| Some(r.estimate));
    let estimates_svg = (estimates.iter().any(|g| g.series.iter().any(|(_, v)| !v.is_empty())))
        .then(|| {
            svg::grouped_boxplot(
                &format!("coefficient estimates — {subtitle}"),
                "estimate",
                &estimates,
                None,
                Some(0.0),
            )
        });
    let pvalues = collect(&|r: &CoeffRow| r.p_value);
    let pvalues_svg =
        (pvalues.iter().any(|g| g.series.iter().any(|(_, v)| !v.is_empty()))).then(|| {
            svg::grouped_boxplot(
                &format!("coefficient p-values — {subtitle}"),
                "p-value",
                &pvalues,
                Some((0.0, 1.0)),
                Some(0.05),
            )
        });
    (estimates_svg, pvalues_svg)
}

/// Tuned-neighbor-count boxplot for one scenario: groups are bias levels
/// ascending, series are the two file views, proxy correlations pooled.
fn knn_figure(rows: &[KnnRow], scenario: Scenario) -> Option<String> {
    let ours: Vec<&KnnRow> = rows.iter().filter(|r| r.scenario == scenario).collect();
    let biases = sorted_distinct(ours.iter().map(|r| r.bias_level));
    if biases.is_empty() {
        return None;
    }
    let groups: Vec<BoxGroup> = biases
        .iter()
        .map(|&bias| {
            let rejection = ours
                .iter()
                .find(|r| r.bias_level.to_bits() == bias.to_bits() && r.rejection_prob.is_some())
                .and_then(|r| r.rejection_prob);
            BoxGroup {
                label: bias_label(scenario, bias, rejection),
                series: [FeatureView::Full, FeatureView::Anonymous]
                    .into_iter()
                    .map(|view| {
                        let values: Vec<f64> = ours
                            .iter()
                            .filter(|r| r.view == view && r.bias_level.to_bits() == bias.to_bits())
                            .map(|r| r.l as f64)
                            .collect();
                        (view, values)
                    })
                    .collect(),
            }
        })
        .collect();
    if groups.iter().all(|g| g.series.iter().all(|(_, v)| v.is_empty())) {
        return None;
    }
    let title =
        format!("tuned neighbor count — {} (proxy correlations pooled)", scenario_title(scenario));
    Some(svg::grouped_boxplot(&title, "neighbor count", &groups, None, None))
}
