//! Deterministic random-number plumbing.
//!
//! Every random decision in the toolkit draws from a ChaCha8 stream whose seed
//! is derived by hashing a master seed together with the identifiers of the
//! use site (scenario, alpha, replicate, a stream tag, ...). Two properties
//! follow:
//!
//! * runs are reproducible bit-for-bit from the master seed alone, regardless
//!   of thread scheduling, because no stream is ever shared across work items;
//! * distinct use sites get statistically independent streams.
//!
//! The mapping from a stream to concrete draws is part of the on-disk format
//! contract and is frozen here: uniforms come from the top 53 bits of
//! `next_u64`, Gaussians from the Box-Muller cosine branch (two uniforms per
//! draw, the sine half discarded), and Bernoulli draws from one uniform.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Labels for the independent random streams a run consumes. The numeric
/// values enter seed derivation and must never be reordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamTag {
    /// Feature tensors of the training methods.
    TrainBase = 1,
    /// Feature tensors of the held-out test methods.
    TestBase = 2,
    /// Tie-breaking among equal scores or equal censored means.
    TieBreak = 3,
    /// Cross-validation fold assignment.
    FoldAssign = 4,
    /// Model weight initialization.
    ModelInit = 5,
    /// Randomness consumed while scoring and ranking candidates.
    Evaluation = 6,
    /// Replicate-level seed derivation in experiment plans.
    Replicate = 7,
    /// Calibration protocol datasets.
    Calibration = 8,
}

/// SplitMix64 finalizer; the standard 64-bit avalanche mixer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a stream seed from a master seed and the identifying parts of a
/// use site. Folding the part count in first keeps prefixes of one part list
/// from colliding with another.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mut state = mix(master ^ mix(parts.len() as u64));
    for &p in parts {
        state = mix(state ^ mix(p));
    }
    state
}

/// Opens the ChaCha8 stream for a derived seed.
pub fn stream(master: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, parts))
}

/// Uniform draw in `[0, 1)` with 53 bits of resolution.
pub fn unit_f64<R: RngCore>(rng: &mut R) -> f64 {
    // 2^-53; the top 53 bits of the word become the mantissa.
    (rng.next_u64() >> 11) as f64 * 1.110_223_024_625_156_5e-16
}

/// Standard Gaussian draw via Box-Muller (cosine branch).
pub fn gaussian_f64<R: RngCore>(rng: &mut R) -> f64 {
    // u1 is shifted away from zero so the log stays finite.
    let u1 = 1.0 - unit_f64(rng);
    let u2 = unit_f64(rng);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Bernoulli draw with success probability `p`, as a 0/1 value.
pub fn bernoulli01<R: RngCore>(rng: &mut R, p: f64) -> u8 {
    u8::from(unit_f64(rng) < p)
}
