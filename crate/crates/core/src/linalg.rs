//! Minimal dense linear algebra for the model fits: the design matrices here
//! never exceed a few dozen columns, so a simple Gauss-Jordan inversion with
//! aliasing detection covers everything the solvers need.

use crate::num::Real;

/// Inverts a symmetric positive semi-definite matrix (row-major, `p x p`).
///
/// Columns whose pivot collapses relative to the largest diagonal entry are
/// *aliased* — linearly dependent on earlier columns (or identically zero) —
/// and are excluded: their rows and columns of the inverse are zeroed and the
/// returned mask flags them. This mirrors how regression software drops
/// collinear terms instead of failing.
pub fn invert_spd<F: Real>(a: &[F], p: usize) -> (Vec<F>, Vec<bool>) {
    assert_eq!(a.len(), p * p, "matrix must be p x p");
    let mut work = a.to_vec();
    let mut inv: Vec<F> = vec![F::zero(); p * p];
    for i in 0..p {
        inv[i * p + i] = F::one();
    }
    let max_diag = (0..p).map(|i| a[i * p + i]).fold(F::zero(), |m, v| if v > m { v } else { m });
    let tol = if max_diag > F::zero() { max_diag * F::of(1e-12) } else { F::of(1e-300) };
    let mut aliased = vec![false; p];
    for k in 0..p {
        let pivot = work[k * p + k];
        if pivot <= tol {
            aliased[k] = true;
            continue;
        }
        let inv_pivot = F::one() / pivot;
        for j in 0..p {
            work[k * p + j] *= inv_pivot;
            inv[k * p + j] *= inv_pivot;
        }
        for i in 0..p {
            if i == k {
                continue;
            }
            let factor = work[i * p + k];
            if factor == F::zero() {
                continue;
            }
            for j in 0..p {
                let wk = work[k * p + j];
                let ik = inv[k * p + j];
                work[i * p + j] -= factor * wk;
                inv[i * p + j] -= factor * ik;
            }
        }
    }
    for k in 0..p {
        if aliased[k] {
            for j in 0..p {
                inv[k * p + j] = F::zero();
                inv[j * p + k] = F::zero();
            }
        }
    }
    (inv, aliased)
}

/// Multiplies a `p x p` row-major matrix by a vector.
pub fn matvec<F: Real>(m: &[F], v: &[F], p: usize) -> Vec<F> {
    (0..p).map(|i| (0..p).map(|j| m[i * p + j] * v[j]).sum()).collect()
}
