//! Configuration loading: presets, the TOML config file, flag overrides,
//! and the cell-selector syntax shared by `generate` and `run`.
//!
//! Precedence, lowest to highest: the preset (`--preset`, default `paper`),
//! then fields present in the config file (`--config`), then the individual
//! flag overrides (`--seed`, `--out`). Unknown config keys are rejected.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use fairsim_core::calibrate::CalibrateError;
use fairsim_core::dataio::DataError;
use fairsim_core::experiment::{ExperimentError, ExperimentPlan};
use fairsim_core::models::{FeatureView, LabelSource, ModelKind};
use fairsim_core::simgen::{Scenario, SimError};

/// Everything that can go wrong in the driver, split by exit code:
/// configuration and schema violations exit 2, runtime failures exit 1.
#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration, plan, or file schema.
    Config(String),
    /// A failure while executing a valid request.
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Runtime(msg) => write!(f, "runtime error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Schema(_) => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::BadPlan(_) => CliError::Config(e.to_string()),
            ExperimentError::Sim(SimError::BadConfig(_)) => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::BadConfig(_) => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("i/o error: {e}"))
    }
}

impl From<CalibrateError> for CliError {
    fn from(e: CalibrateError) -> Self {
        match e {
            CalibrateError::Sim(SimError::BadConfig(_)) => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

/// The config file: a flat key-value table mirroring the experiment plan,
/// plus the output directory and worker count. Every field is optional; an
/// absent field keeps the preset's value.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenarios: Option<Vec<Scenario>>,
    pub alphas: Option<Vec<f64>>,
    /// Explicit bias levels (thresholds or depreciations) replacing the
    /// scenario's default five-level grid.
    pub bias_levels: Option<Vec<f64>>,
    pub algorithms: Option<Vec<ModelKind>>,
    pub views: Option<Vec<FeatureView>>,
    pub label_sources: Option<Vec<LabelSource>>,
    pub replicates: Option<usize>,
    pub n_train: Option<usize>,
    pub n_test: Option<usize>,
    pub n_candidates: Option<usize>,
    pub k_features: Option<usize>,
    pub master_seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
}

/// Fully resolved invocation settings.
#[derive(Debug, Clone)]
pub struct Settings {
    pub plan: ExperimentPlan,
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
}

/// Builds settings from a preset base, an optional config file, and flag
/// overrides. The plan is *not* validated here — commands that execute a
/// plan validate it (commands that only read output directories never
/// require a coherent plan).
pub fn resolve(
    preset: Preset,
    config_path: Option<&Path>,
    out_flag: Option<&Path>,
    seed_flag: Option<u64>,
) -> Result<Settings, CliError> {
    let mut plan = match preset {
        Preset::Paper => ExperimentPlan::canonical(0),
        Preset::Desk => ExperimentPlan::desk(0),
    };
    let mut out_dir = PathBuf::from("out");
    let mut threads = None;

    if let Some(path) = config_path {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        apply(&mut plan, &mut out_dir, &mut threads, cfg);
    }
    if let Some(seed) = seed_flag {
        plan.master_seed = seed;
    }
    if let Some(out) = out_flag {
        out_dir = out.to_path_buf();
    }
    Ok(Settings { plan, out_dir, threads })
}

fn apply(
    plan: &mut ExperimentPlan,
    out_dir: &mut PathBuf,
    threads: &mut Option<usize>,
    cfg: RunConfig,
) {
    if let Some(v) = cfg.scenarios {
        plan.scenarios = v;
    }
    if let Some(v) = cfg.alphas {
        plan.alphas = v;
    }
    if let Some(v) = cfg.bias_levels {
        plan.bias_override = Some(v);
    }
    if let Some(v) = cfg.algorithms {
        plan.algorithms = v;
    }
    if let Some(v) = cfg.views {
        plan.views = v;
    }
    if let Some(v) = cfg.label_sources {
        plan.label_sources = v;
    }
    if let Some(v) = cfg.replicates {
        plan.replicates = v;
    }
    if let Some(v) = cfg.n_train {
        plan.n_train = v;
    }
    if let Some(v) = cfg.n_test {
        plan.n_test = v;
    }
    if let Some(v) = cfg.n_candidates {
        plan.n_candidates = v;
    }
    if let Some(v) = cfg.k_features {
        plan.k_features = v;
    }
    if let Some(v) = cfg.master_seed {
        plan.master_seed = v;
    }
    if let Some(v) = cfg.out_dir {
        *out_dir = v;
    }
    if let Some(v) = cfg.threads {
        *threads = Some(v);
    }
}

/// Named plan presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    /// Canonical design: full grids, 100 replicates, 5000/500 methods.
    Paper,
    /// Scaled-down check: full grids, 20 replicates, 1000/100 methods.
    Desk,
}

/// One `scenario,alpha,bias` selector, e.g. `threshold-binary,0.2,0.8`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSpec {
    pub scenario: Scenario,
    pub alpha: f64,
    pub bias: f64,
}

impl FromStr for CellSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').collect();
        if parts.len() != 3 {
            return Err(format!(
                "expected `scenario,alpha,bias` (e.g. `threshold-binary,0.2,0.8`), got `{s}`"
            ));
        }
        let scenario = Scenario::parse(parts[0].trim()).ok_or_else(|| {
            format!(
                "unknown scenario `{}` (expected self-censorship, threshold-binary, or threshold-continuous)",
                parts[0].trim()
            )
        })?;
        let alpha: f64 =
            parts[1].trim().parse().map_err(|e| format!("bad alpha `{}`: {e}", parts[1]))?;
        let bias: f64 =
            parts[2].trim().parse().map_err(|e| format!("bad bias level `{}`: {e}", parts[2]))?;
        Ok(CellSpec { scenario, alpha, bias })
    }
}

/// Restricts a plan to a single selected cell.
pub fn restrict_to_cell(plan: &mut ExperimentPlan, cell: &CellSpec) {
    plan.scenarios = vec![cell.scenario];
    plan.alphas = vec![cell.alpha];
    plan.bias_override = Some(vec![cell.bias]);
}

/// Installs the global worker pool: the `FAIRSIM_THREADS` environment
/// variable wins over the config value; zero or absent means the default
/// (one worker per core). Safe to call once per process.
pub fn init_threads(config_threads: Option<usize>) {
    let env_threads =
        std::env::var("FAIRSIM_THREADS").ok().and_then(|s| s.trim().parse::<usize>().ok());
    if let Some(n) = env_threads.or(config_threads) {
        if n > 0 {
            // Errors only if a pool already exists, which keeps that pool.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}
