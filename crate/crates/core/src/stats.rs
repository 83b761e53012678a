//! Small statistical helpers shared by the generators, the models, and the
//! analysis code: standard normal CDF and quantile, the exact tail of a
//! fair-coin binomial, and sample moments.

use statrs::distribution::{ContinuousCDF, Normal};

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal parameters are valid")
}

/// Standard normal cumulative distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    standard_normal().cdf(x)
}

/// Standard normal quantile function (inverse CDF). `p` must lie in (0, 1).
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile probability must lie in (0, 1), got {p}");
    standard_normal().inverse_cdf(p)
}

/// Exact P(C <= c) for C ~ Binomial(n, 1/2), computed in integer arithmetic.
/// The probabilities are dyadic rationals, so this is exact for n <= 63.
pub fn binomial_half_cdf(n: u32, c: u32) -> f64 {
    assert!(n <= 63, "fair-coin binomial tail supported up to n = 63, got {n}");
    if c >= n {
        return 1.0;
    }
    let mut acc: u128 = 0;
    let mut coeff: u128 = 1; // C(n, 0)
    for i in 0..=c {
        acc += coeff;
        coeff = coeff * (n as u128 - i as u128) / (i as u128 + 1);
    }
    acc as f64 / (1u128 << n) as f64
}

/// Sample mean of a slice; zero on empty input.
pub fn mean_f64(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (n - 1 denominator); zero below two points.
pub fn variance_f64(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean_f64(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Pearson correlation of two equal-length samples.
pub fn correlation_f64(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len(), "correlation inputs must have equal length");
    let n = xs.len();
    assert!(n >= 2, "correlation needs at least two points");
    let mx = mean_f64(xs);
    let my = mean_f64(ys);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        let dx = xs[i] - mx;
        let dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    sxy / (sxx * syy).sqrt()
}
