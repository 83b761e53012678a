//! Core library for `fairsim`: synthetic recruitment data generation under
//! controlled selection biases, classifier training, and benchmark analysis.
//!
//! The crate is organized bottom-up:
//!
//! - [`num`] — the [`num::Real`] scalar abstraction; everything is generic
//!   over `f32`/`f64`.
//! - [`rng`] — seed derivation and named substreams, so every random draw in
//!   a run is reproducible and independent of thread scheduling.
//! - [`stats`] — small numerical helpers (normal CDF/quantile, exact
//!   binomial tails, moments).
//! - [`linalg`] — dense symmetric solves with aliasing detection.
//! - [`simgen`] — synthetic recruitment methods: candidate features,
//!   perfect and biased rankings, threshold grids.
//! - [`models`] — the five classifier families and candidate ranking.
//! - [`experiment`] — the factorial benchmark: plans, cells, replicates,
//!   parallel execution, accuracy records.
//! - [`analysis`] — reductions to figure-ready tables: per-cell summaries,
//!   confidence ellipses, coefficient and neighbor-count distributions.
//! - [`dataio`] — versioned file formats for datasets, results, and
//!   summaries; deterministic, byte-stable writers.
//! - [`calibrate`] — hyperparameter-range calibration protocols run on
//!   batches of unbiased datasets.
//!
//! The command-line crate wires these into batch subcommands.

pub mod analysis;
pub mod calibrate;
pub mod dataio;
pub mod experiment;
pub mod linalg;
pub mod models;
pub mod num;
pub mod rng;
pub mod simgen;
pub mod stats;

/// Default scalar type used by the command-line tools and presets.
pub type Scalar = f64;
