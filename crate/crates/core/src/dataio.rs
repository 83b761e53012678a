//! File formats: datasets, results, diagnostics, summaries, and the run
//! manifest. All writers are deterministic — identical inputs produce
//! byte-identical files (floats use shortest round-trip formatting) — with
//! one documented exception: the manifest's wall-time field records the
//! actual run duration.
//!
//! Schemas are versioned; see `docs/formats.md` in the repository root.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{CoeffRow, EllipseSpec, KnnRow, SummaryCell};
use crate::experiment::{CoeffRecord, EvalRecord, ExperimentPlan};
use crate::models::{FeatureView, LabelSource, ModelKind};
use crate::num::Real;
use crate::simgen::{DatasetBundle, Scenario};

/// Version stamped into manifests and documented in `docs/formats.md`;
/// bumped on any schema change.
pub const FORMAT_VERSION: u32 = 1;

/// Errors raised while reading or writing run files.
#[derive(Debug)]
pub enum DataError {
    Io(std::io::Error),
    Csv(csv::Error),
    Json(serde_json::Error),
    /// A file exists but does not match its documented schema.
    Schema(String),
}

impl std::fmt::Display for DataError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DataError::Io(e) => write!(f, "i/o error: {e}"),
            DataError::Csv(e) => write!(f, "csv error: {e}"),
            DataError::Json(e) => write!(f, "json error: {e}"),
            DataError::Schema(msg) => write!(f, "schema error: {msg}"),
        }
    }
}

impl std::error::Error for DataError {}

impl From<std::io::Error> for DataError {
    fn from(e: std::io::Error) -> Self {
        DataError::Io(e)
    }
}

impl From<csv::Error> for DataError {
    fn from(e: csv::Error) -> Self {
        DataError::Csv(e)
    }
}

impl From<serde_json::Error> for DataError {
    fn from(e: serde_json::Error) -> Self {
        DataError::Json(e)
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), DataError> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(DataError::Io)?;
    Ok(())
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, DataError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for row in reader.deserialize() {
        rows.push(row.map_err(|e| DataError::Schema(format!("{}: {e}", path.display())))?);
    }
    Ok(rows)
}

fn write_json_pretty<T: Serialize>(path: &Path, value: &T) -> Result<(), DataError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

/// Writes one generated dataset into `dir`: the four pooled training tables
/// (`train_{full,anon}_{perfect,biased}.csv`, feature columns plus a 0/1
/// `winner` label), the per-candidate test set (`test.csv`), and the
/// generating configuration (`dataset.json`).
pub fn write_dataset<F: Real>(dir: &Path, bundle: &DatasetBundle<F>) -> Result<(), DataError> {
    fs::create_dir_all(dir)?;
    for (view, vtag) in [(FeatureView::Full, "full"), (FeatureView::Anonymous, "anon")] {
        for (labels, ltag) in [(LabelSource::Perfect, "perfect"), (LabelSource::Biased, "biased")] {
            let table = bundle.training_table(view, labels);
            let path = dir.join(format!("train_{vtag}_{ltag}.csv"));
            let mut writer = csv::Writer::from_path(&path)?;
            let mut header = table.column_names();
            header.push("winner".to_string());
            writer.write_record(&header)?;
            for (row, &winner) in table.features().rows().into_iter().zip(table.labels()) {
                let mut record: Vec<String> =
                    row.iter().map(|v| format!("{}", v.as_f64())).collect();
                record.push(winner.to_string());
                writer.write_record(&record)?;
            }
            writer.flush().map_err(DataError::Io)?;
        }
    }

    let k = bundle.config.k_features;
    let test_path = dir.join("test.csv");
    let mut writer = csv::Writer::from_path(&test_path)?;
    let mut header = vec!["method".to_string(), "candidate".to_string()];
    for letter in ['x', 'y', 'z'] {
        header.extend((1..=k).map(|i| format!("{letter}{i}")));
    }
    header.push("rank_perfect".to_string());
    header.push("rank_biased".to_string());
    writer.write_record(&header)?;
    for (m, method) in bundle.test_methods.iter().enumerate() {
        for j in 0..bundle.config.n_candidates {
            let mut record = vec![m.to_string(), j.to_string()];
            for block in [&method.x, &method.y, &method.z] {
                record.extend((0..k).map(|f| format!("{}", block[[j, f]].as_f64())));
            }
            record.push(method.rank_perfect[j].to_string());
            record.push(method.rank_biased[j].to_string());
            writer.write_record(&record)?;
        }
    }
    writer.flush().map_err(DataError::Io)?;

    write_json_pretty(&dir.join("dataset.json"), &bundle.config)
}

// ---------------------------------------------------------------------------
// Results and diagnostics
// ---------------------------------------------------------------------------

/// Writes accuracy records to `results.csv`. Columns: `scenario, alpha,
/// bias_level, rejection_prob, algorithm, view, replicate, acc_perfect,
/// acc_biased, hyperparam, converged, error`; optional fields serialize as
/// empty cells.
pub fn write_results(path: &Path, records: &[EvalRecord]) -> Result<(), DataError> {
    write_csv(path, records)
}

/// Reads `results.csv` back into records.
pub fn read_results(path: &Path) -> Result<Vec<EvalRecord>, DataError> {
    read_csv(path)
}

/// Writes logistic-family coefficient diagnostics to `diagnostics.csv`.
pub fn write_diagnostics(path: &Path, coeffs: &[CoeffRecord]) -> Result<(), DataError> {
    write_csv(path, coeffs)
}

/// Reads `diagnostics.csv` back.
pub fn read_diagnostics(path: &Path) -> Result<Vec<CoeffRecord>, DataError> {
    read_csv(path)
}

/// One failed fit inside a run, listed in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureNote {
    pub scenario: Scenario,
    pub alpha: f64,
    pub bias_level: f64,
    pub algorithm: ModelKind,
    pub view: FeatureView,
    pub replicate: usize,
    pub message: String,
}

/// Self-description of a run: the executed plan, software version, wall
/// time, and per-cell failures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub code_version: String,
    pub plan: ExperimentPlan,
    pub n_records: usize,
    pub failures: Vec<FailureNote>,
    /// The one non-reproducible field: actual run duration.
    pub wall_time_seconds: f64,
}

impl RunManifest {
    /// Collects the failure notes out of a record set.
    pub fn failure_notes(records: &[EvalRecord]) -> Vec<FailureNote> {
        records
            .iter()
            .filter_map(|r| {
                r.error.as_ref().map(|message| FailureNote {
                    scenario: r.scenario,
                    alpha: r.alpha,
                    bias_level: r.bias_level,
                    algorithm: r.algorithm,
                    view: r.view,
                    replicate: r.replicate,
                    message: message.clone(),
                })
            })
            .collect()
    }
}

/// Writes the run manifest as pretty JSON.
pub fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<(), DataError> {
    write_json_pretty(path, manifest)
}

/// Reads a run manifest.
pub fn read_manifest(path: &Path) -> Result<RunManifest, DataError> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

// ---------------------------------------------------------------------------
// Analysis outputs
// ---------------------------------------------------------------------------

/// Flat mirror of [`SummaryCell`] for `summary.csv`; the ellipse lives in
/// `ellipses.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: Scenario,
    pub alpha: f64,
    pub bias_level: f64,
    pub rejection_prob: Option<f64>,
    pub algorithm: ModelKind,
    pub view: FeatureView,
    pub n_records: usize,
    pub n_failed: usize,
    pub mean_acc_perfect: Option<f64>,
    pub sd_acc_perfect: Option<f64>,
    pub mean_acc_biased: Option<f64>,
    pub sd_acc_biased: Option<f64>,
}

impl From<&SummaryCell> for SummaryRow {
    fn from(c: &SummaryCell) -> Self {
        SummaryRow {
            scenario: c.scenario,
            alpha: c.alpha,
            bias_level: c.bias_level,
            rejection_prob: c.rejection_prob,
            algorithm: c.algorithm,
            view: c.view,
            n_records: c.n_records,
            n_failed: c.n_failed,
            mean_acc_perfect: c.mean_acc_perfect,
            sd_acc_perfect: c.sd_acc_perfect,
            mean_acc_biased: c.mean_acc_biased,
            sd_acc_biased: c.sd_acc_biased,
        }
    }
}

/// One cell's confidence ellipse in `ellipses.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipseEntry {
    pub scenario: Scenario,
    pub alpha: f64,
    pub bias_level: f64,
    pub algorithm: ModelKind,
    pub view: FeatureView,
    pub ellipse: EllipseSpec,
}

/// Writes `summary.csv` and `ellipses.json` from per-cell summaries.
pub fn write_summary(dir: &Path, cells: &[SummaryCell]) -> Result<(), DataError> {
    let rows: Vec<SummaryRow> = cells.iter().map(SummaryRow::from).collect();
    write_csv(&dir.join("summary.csv"), &rows)?;
    let ellipses: Vec<EllipseEntry> = cells
        .iter()
        .filter_map(|c| {
            c.ellipse.map(|ellipse| EllipseEntry {
                scenario: c.scenario,
                alpha: c.alpha,
                bias_level: c.bias_level,
                algorithm: c.algorithm,
                view: c.view,
                ellipse,
            })
        })
        .collect();
    write_json_pretty(&dir.join("ellipses.json"), &ellipses)
}

/// Reads `summary.csv`.
pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>, DataError> {
    read_csv(path)
}

/// Reads `ellipses.json`.
pub fn read_ellipses(path: &Path) -> Result<Vec<EllipseEntry>, DataError> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes the block-tagged coefficient table (`coefficients.csv`).
pub fn write_coefficient_rows(path: &Path, rows: &[CoeffRow]) -> Result<(), DataError> {
    write_csv(path, rows)
}

/// Reads `coefficients.csv`.
pub fn read_coefficient_rows(path: &Path) -> Result<Vec<CoeffRow>, DataError> {
    read_csv(path)
}

/// Writes the tuned-neighbor-count table (`knn_L.csv`).
pub fn write_knn_rows(path: &Path, rows: &[KnnRow]) -> Result<(), DataError> {
    write_csv(path, rows)
}

/// Reads `knn_L.csv`.
pub fn read_knn_rows(path: &Path) -> Result<Vec<KnnRow>, DataError> {
    read_csv(path)
}

/// Writes arbitrary text, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<(), DataError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut file = fs::File::create(path)?;
    file.write_all(text.as_bytes())?;
    Ok(())
}
