//! Reductions from raw benchmark records to figure-ready tables: per-cell
//! accuracy summaries with 95% confidence ellipses, long-format coefficient
//! and p-value tables for the logistic fits, and tuned-neighbor-count
//! distributions.
//!
//! Everything here is a pure function of the records; nothing is mutated and
//! no randomness is consumed.

use serde::{Deserialize, Serialize};

use crate::experiment::{CoeffRecord, EvalRecord};
use crate::models::{FeatureView, LabelSource, ModelKind};
use crate::simgen::Scenario;
use crate::stats::{mean_f64, variance_f64};

/// 0.95 quantile of the chi-square distribution with two degrees of freedom
/// (-2 ln 0.05): squared Mahalanobis radius containing 95% of a bivariate
/// Gaussian.
pub const CHI2_2_95: f64 = 5.991464547107982;

/// Errors raised by the reductions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnalysisError {
    /// Fewer points than an ellipse needs.
    TooFewPoints { needed: usize, got: usize },
    /// The sample covariance is rank-deficient.
    CollinearPoints,
}

impl std::fmt::Display for AnalysisError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AnalysisError::TooFewPoints { needed, got } => {
                write!(f, "ellipse needs at least {needed} points, got {got}")
            }
            AnalysisError::CollinearPoints => write!(f, "collinear points"),
        }
    }
}

impl std::error::Error for AnalysisError {}

/// A 95% confidence ellipse for a bivariate point cloud.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseSpec {
    pub center: (f64, f64),
    /// Major then minor semi-axis length.
    pub semi_axes: (f64, f64),
    /// Angle of the major axis against the x-axis, in radians, in
    /// (-pi/2, pi/2].
    pub rotation: f64,
}

impl EllipseSpec {
    /// Whether a point lies inside or on the ellipse.
    pub fn contains(&self, point: (f64, f64)) -> bool {
        let (dx, dy) = (point.0 - self.center.0, point.1 - self.center.1);
        let (sin, cos) = self.rotation.sin_cos();
        let u = dx * cos + dy * sin;
        let v = -dx * sin + dy * cos;
        let (a, b) = self.semi_axes;
        (u / a).powi(2) + (v / b).powi(2) <= 1.0
    }
}

/// Fits the 95% Gaussian confidence ellipse of a point cloud: center at the
/// sample mean, axes from the eigendecomposition of the sample covariance
/// scaled by the 0.95 chi-square quantile with two degrees of freedom.
pub fn ellipse_95(points: &[(f64, f64)]) -> Result<EllipseSpec, AnalysisError> {
    if points.len() < 3 {
        return Err(AnalysisError::TooFewPoints { needed: 3, got: points.len() });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let (mx, my) = (mean_f64(&xs), mean_f64(&ys));
    let n = points.len() as f64;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for &(x, y) in points {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    let (a, c, b) = (sxx / (n - 1.0), syy / (n - 1.0), sxy / (n - 1.0));

    // Closed-form eigendecomposition of the symmetric 2x2 matrix [[a,b],[b,c]].
    let half_trace = (a + c) / 2.0;
    let disc = ((a - c) / 2.0).hypot(b);
    let lambda_major = half_trace + disc;
    let lambda_minor = half_trace - disc;
    if !(lambda_major.is_finite() && lambda_minor > lambda_major * 1e-12) {
        return Err(AnalysisError::CollinearPoints);
    }
    let rotation = if b.abs() <= lambda_major * 1e-15 {
        if a >= c {
            0.0
        } else {
            std::f64::consts::FRAC_PI_2
        }
    } else {
        // Eigenvector of lambda_major solves (a - lambda) u + b v = 0.
        let theta = (lambda_major - a).atan2(b);
        // Fold into (-pi/2, pi/2]: an axis direction is sign-free.
        if theta > std::f64::consts::FRAC_PI_2 {
            theta - std::f64::consts::PI
        } else if theta <= -std::f64::consts::FRAC_PI_2 {
            theta + std::f64::consts::PI
        } else {
            theta
        }
    };
    Ok(EllipseSpec {
        center: (mx, my),
        semi_axes: ((lambda_major * CHI2_2_95).sqrt(), (lambda_minor * CHI2_2_95).sqrt()),
        rotation,
    })
}

/// Per-cell aggregate of the accuracy records: one scatter panel point
/// cloud's mean, spread, and confidence ellipse. The underlying points stay
/// in the records file, addressed by this cell's identifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub scenario: Scenario,
    pub alpha: f64,
    pub bias_level: f64,
    pub rejection_prob: Option<f64>,
    pub algorithm: ModelKind,
    pub view: FeatureView,
    /// Records aggregated (one per replicate).
    pub n_records: usize,
    /// Records whose fits failed; excluded from the statistics.
    pub n_failed: usize,
    pub mean_acc_perfect: Option<f64>,
    pub sd_acc_perfect: Option<f64>,
    pub mean_acc_biased: Option<f64>,
    pub sd_acc_biased: Option<f64>,
    /// Ellipse over (perfect-trained, biased-trained) accuracy pairs;
    /// absent with fewer than three complete pairs or a degenerate cloud.
    pub ellipse: Option<EllipseSpec>,
}

fn cell_key(r: &EvalRecord) -> (u64, u64, u64, u64, u64) {
    let k = r.sort_key();
    (k.0, k.1, k.2, k.3, k.4)
}

/// Groups records by cell (scenario, alpha, bias level, algorithm, view) and
/// aggregates accuracies across replicates. Input order does not matter;
/// output is canonically sorted.
pub fn summarize(records: &[EvalRecord]) -> Vec<SummaryCell> {
    let mut sorted: Vec<&EvalRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.sort_key());
    let mut cells = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].partition_point(|r| cell_key(r) == cell_key(sorted[i])) + i;
        let group = &sorted[i..j];
        let first = group[0];
        let perfect: Vec<f64> = group.iter().filter_map(|r| r.acc_perfect).collect();
        let biased: Vec<f64> = group.iter().filter_map(|r| r.acc_biased).collect();
        let pairs: Vec<(f64, f64)> =
            group.iter().filter_map(|r| r.acc_perfect.zip(r.acc_biased)).collect();
        let stats = |xs: &[f64]| {
            let mean = (!xs.is_empty()).then(|| mean_f64(xs));
            let sd = (xs.len() >= 2).then(|| variance_f64(xs).sqrt());
            (mean, sd)
        };
        let (mean_acc_perfect, sd_acc_perfect) = stats(&perfect);
        let (mean_acc_biased, sd_acc_biased) = stats(&biased);
        cells.push(SummaryCell {
            scenario: first.scenario,
            alpha: first.alpha,
            bias_level: first.bias_level,
            rejection_prob: first.rejection_prob,
            algorithm: first.algorithm,
            view: first.view,
            n_records: group.len(),
            n_failed: group.iter().filter(|r| r.error.is_some()).count(),
            mean_acc_perfect,
            sd_acc_perfect,
            mean_acc_biased,
            sd_acc_biased,
            ellipse: ellipse_95(&pairs).ok(),
        });
        i = j;
    }
    cells
}

/// Feature block a coefficient term belongs to, from its name.
pub fn term_block(term: &str) -> &'static str {
    match term.chars().next() {
        _ if term == "(intercept)" => "intercept",
        Some('x') => "ability",
        Some('y') => "protected",
        Some('z') => "proxy",
        _ => "unknown",
    }
}

/// One coefficient observation, tagged with its feature block: long-format,
/// one row per (cell, replicate, term), ready for boxplots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoeffRow {
    pub scenario: Scenario,
    pub alpha: f64,
    pub bias_level: f64,
    pub algorithm: ModelKind,
    pub view: FeatureView,
    pub replicate: usize,
    pub label_source: LabelSource,
    pub term: String,
    pub block: String,
    pub estimate: f64,
    pub std_error: Option<f64>,
    pub p_value: Option<f64>,
}

/// Tags every coefficient record with its feature block. Terms a stepwise
/// search dropped are absent from the input and stay absent here.
pub fn coefficient_tables(coeffs: &[CoeffRecord]) -> Vec<CoeffRow> {
    coeffs
        .iter()
        .map(|c| CoeffRow {
            scenario: c.scenario,
            alpha: c.alpha,
            bias_level: c.bias_level,
            algorithm: c.algorithm,
            view: c.view,
            replicate: c.replicate,
            label_source: c.label_source,
            term: c.term.clone(),
            block: term_block(&c.term).to_string(),
            estimate: c.estimate,
            std_error: c.std_error,
            p_value: c.p_value,
        })
        .collect()
}

/// One tuned neighbor count observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnRow {
    pub scenario: Scenario,
    pub alpha: f64,
    pub bias_level: f64,
    pub rejection_prob: Option<f64>,
    pub view: FeatureView,
    pub replicate: usize,
    pub l: u32,
}

/// Extracts the tuned neighbor counts from nearest-neighbor records,
/// long-format per (cell, replicate).
pub fn knn_l_table(records: &[EvalRecord]) -> Vec<KnnRow> {
    records
        .iter()
        .filter(|r| r.algorithm == ModelKind::Knn)
        .filter_map(|r| {
            r.hyperparam.map(|l| KnnRow {
                scenario: r.scenario,
                alpha: r.alpha,
                bias_level: r.bias_level,
                rejection_prob: r.rejection_prob,
                view: r.view,
                replicate: r.replicate,
                l,
            })
        })
        .collect()
}
