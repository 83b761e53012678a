//! Soft-margin support-vector machine, trained by sequential minimal
//! optimization on the dual problem.
//!
//! The solver keeps the dual gradient exact and repeatedly updates the
//! maximal violating pair: the index pushing hardest from below and the one
//! pushing hardest from above. Optimality is declared once the pair gap
//! drops to `STOP_TOL`, and the decision bias is read off as the midpoint of
//! the two sides. Each two-variable subproblem is solved in closed form and
//! clipped to the box `[0, cost]`.
//!
//! The experiment harness uses the linear kernel only (soft margin, unit
//! cost); the polynomial, radial, and sigmoid kernels back the calibration
//! comparisons.

use ndarray::Array2;

use crate::num::Real;

use super::ModelError;

/// Stopping tolerance on the violating-pair gap.
const STOP_TOL: f64 = 1e-3;
/// Sweep cap; each sweep performs up to one pair update per training row.
const MAX_SWEEPS: usize = 10_000;
/// Floor for the curvature of a pair subproblem, guarding duplicate rows.
const TAU: f64 = 1e-12;

/// Kernel functions for the dual solver. Parameters follow the common
/// library convention: `gamma` scales inner products or distances, `coef0`
/// shifts them, `degree` is the polynomial power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SvmKernel {
    Linear,
    Polynomial { degree: u32, gamma: f64, coef0: f64 },
    Rbf { gamma: f64 },
    Sigmoid { gamma: f64, coef0: f64 },
}

impl SvmKernel {
    pub fn name(&self) -> &'static str {
        match self {
            SvmKernel::Linear => "linear",
            SvmKernel::Polynomial { .. } => "polynomial",
            SvmKernel::Rbf { .. } => "radial",
            SvmKernel::Sigmoid { .. } => "sigmoid",
        }
    }

    /// Builds a kernel by name with the defaults most SVM libraries use:
    /// `gamma = 1 / n_features`, `coef0 = 0`, `degree = 3`.
    pub fn conventional(name: &str, n_features: usize) -> Option<SvmKernel> {
        let gamma = 1.0 / n_features.max(1) as f64;
        match name {
            "linear" => Some(SvmKernel::Linear),
            "polynomial" => Some(SvmKernel::Polynomial { degree: 3, gamma, coef0: 0.0 }),
            "radial" => Some(SvmKernel::Rbf { gamma }),
            "sigmoid" => Some(SvmKernel::Sigmoid { gamma, coef0: 0.0 }),
            _ => None,
        }
    }

    pub fn eval<F: Real>(&self, a: &[F], b: &[F]) -> F {
        match *self {
            SvmKernel::Linear => dot(a, b),
            SvmKernel::Polynomial { degree, gamma, coef0 } => {
                (F::of(gamma) * dot(a, b) + F::of(coef0)).powi(degree as i32)
            }
            SvmKernel::Rbf { gamma } => {
                let mut d2 = F::zero();
                for (x, y) in a.iter().zip(b) {
                    let d = *x - *y;
                    d2 += d * d;
                }
                (-F::of(gamma) * d2).exp()
            }
            SvmKernel::Sigmoid { gamma, coef0 } => (F::of(gamma) * dot(a, b) + F::of(coef0)).tanh(),
        }
    }
}

fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

/// Output of the dual solver, kernel-agnostic.
#[derive(Debug, Clone)]
pub struct DualSolution<F> {
    /// Multiplier per training row, in `[0, cost]`.
    pub alpha: Vec<F>,
    /// Decision bias `b` in `f(x) = sum_i alpha_i y_i K(x_i, x) + b`.
    pub bias: F,
    /// Whether the pair gap reached the tolerance within the sweep cap.
    pub converged: bool,
    /// Sweeps consumed.
    pub sweeps: usize,
}

/// Signed labels: 0 maps to -1, 1 maps to +1.
fn signed_labels<F: Real>(labels: &[u8]) -> Vec<F> {
    labels.iter().map(|&l| if l == 1 { F::one() } else { -F::one() }).collect()
}

/// Maximal violating pair of the current gradient: the best index of the
/// "can increase" set, the best of the "can decrease" set, and their scores.
/// Both sets are non-empty whenever both classes are present and `cost > 0`.
fn violating_pair<F: Real>(
    y: &[F],
    alpha: &[F],
    grad: &[F],
    cost: F,
) -> (Option<usize>, F, Option<usize>, F) {
    let mut up_best = F::neg_infinity();
    let mut up_idx = None;
    let mut low_best = F::infinity();
    let mut low_idx = None;
    for t in 0..y.len() {
        let score = -(y[t] * grad[t]);
        let positive = y[t] > F::zero();
        let in_up = (positive && alpha[t] < cost) || (!positive && alpha[t] > F::zero());
        let in_low = (positive && alpha[t] > F::zero()) || (!positive && alpha[t] < cost);
        if in_up && score > up_best {
            up_best = score;
            up_idx = Some(t);
        }
        if in_low && score < low_best {
            low_best = score;
            low_idx = Some(t);
        }
    }
    (up_idx, up_best, low_idx, low_best)
}

/// Solves the soft-margin dual `min (1/2) a'Qa - e'a` over the box
/// `[0, cost]^n` with `y'a = 0`, where `Q_ij = y_i y_j K(x_i, x_j)`.
pub fn solve_dual<F: Real>(
    features: &Array2<F>,
    labels: &[u8],
    kernel: &SvmKernel,
    cost: F,
    tol: F,
    max_sweeps: usize,
) -> Result<DualSolution<F>, ModelError> {
    let n = features.shape()[0];
    let d = features.shape()[1];
    if n == 0 {
        return Err(ModelError::EmptyTable);
    }
    assert_eq!(n, labels.len(), "one label per feature row");
    if cost <= F::zero() {
        return Err(ModelError::NumericalFailure("soft-margin cost must be positive".into()));
    }
    if !labels.contains(&0) || !labels.contains(&1) {
        return Err(ModelError::DegenerateLabels);
    }

    let flat = features.as_slice().expect("feature table is contiguous");
    let row = |i: usize| &flat[i * d..(i + 1) * d];
    let y = signed_labels::<F>(labels);
    let diag: Vec<F> = (0..n).map(|i| kernel.eval(row(i), row(i))).collect();

    let mut alpha = vec![F::zero(); n];
    // Dual gradient Qa - e; exact throughout, starting from a = 0.
    let mut grad = vec![-F::one(); n];
    let mut sweeps = 0;
    let mut converged = false;

    'outer: while sweeps < max_sweeps {
        sweeps += 1;
        for _ in 0..n {
            let (up_idx, up_best, low_idx, low_best) = violating_pair(&y, &alpha, &grad, cost);
            let (i, j) = match (up_idx, low_idx) {
                (Some(i), Some(j)) => (i, j),
                _ => {
                    converged = true;
                    break 'outer;
                }
            };
            if up_best - low_best <= tol {
                converged = true;
                break 'outer;
            }

            let k_ij = kernel.eval(row(i), row(j));
            let q_ij = y[i] * y[j] * k_ij;
            let old_i = alpha[i];
            let old_j = alpha[j];
            let two = F::of(2.0);
            let tau = F::of(TAU);

            if (y[i] > F::zero()) != (y[j] > F::zero()) {
                let mut quad = diag[i] + diag[j] + two * q_ij;
                if quad <= F::zero() {
                    quad = tau;
                }
                let delta = (-grad[i] - grad[j]) / quad;
                let diff = alpha[i] - alpha[j];
                alpha[i] += delta;
                alpha[j] += delta;
                if diff > F::zero() {
                    if alpha[j] < F::zero() {
                        alpha[j] = F::zero();
                        alpha[i] = diff;
                    }
                } else if alpha[i] < F::zero() {
                    alpha[i] = F::zero();
                    alpha[j] = -diff;
                }
                if diff > F::zero() {
                    if alpha[i] > cost {
                        alpha[i] = cost;
                        alpha[j] = cost - diff;
                    }
                } else if alpha[j] > cost {
                    alpha[j] = cost;
                    alpha[i] = cost + diff;
                }
            } else {
                let mut quad = diag[i] + diag[j] - two * q_ij;
                if quad <= F::zero() {
                    quad = tau;
                }
                let delta = (grad[i] - grad[j]) / quad;
                let sum = alpha[i] + alpha[j];
                alpha[i] -= delta;
                alpha[j] += delta;
                if sum > cost {
                    if alpha[i] > cost {
                        alpha[i] = cost;
                        alpha[j] = sum - cost;
                    }
                } else if alpha[j] < F::zero() {
                    alpha[j] = F::zero();
                    alpha[i] = sum;
                }
                if sum > cost {
                    if alpha[j] > cost {
                        alpha[j] = cost;
                        alpha[i] = sum - cost;
                    }
                } else if alpha[i] < F::zero() {
                    alpha[i] = F::zero();
                    alpha[j] = sum;
                }
            }

            let d_i = alpha[i] - old_i;
            let d_j = alpha[j] - old_j;
            if d_i == F::zero() && d_j == F::zero() {
                continue;
            }
            for t in 0..n {
                let k_ti = kernel.eval(row(t), row(i));
                let k_tj = kernel.eval(row(t), row(j));
                grad[t] += y[t] * (y[i] * k_ti * d_i + y[j] * k_tj * d_j);
            }
        }
    }

    let (_, up_best, _, low_best) = violating_pair(&y, &alpha, &grad, cost);
    let bias = (up_best + low_best) / F::of(2.0);
    if !bias.is_finite() {
        return Err(ModelError::NumericalFailure("dual solver produced a non-finite bias".into()));
    }
    Ok(DualSolution { alpha, bias, converged, sweeps })
}

/// A trained linear SVM: explicit weight vector, so scoring is one dot
/// product.
#[derive(Debug, Clone)]
pub struct SvmModel<F> {
    pub weights: Vec<F>,
    pub bias: F,
    /// Dual multipliers, kept for diagnostics; nonzero entries mark support
    /// vectors.
    pub alpha: Vec<F>,
    pub cost: F,
    pub converged: bool,
    pub sweeps: usize,
}

impl<F: Real> SvmModel<F> {
    pub fn width(&self) -> usize {
        self.weights.len()
    }

    pub fn n_support(&self) -> usize {
        self.alpha.iter().filter(|a| **a > F::zero()).count()
    }

    /// Signed distance surrogate `w . x + b`; positive predicts a winner.
    pub fn decision_value(&self, row: &[F]) -> F {
        debug_assert_eq!(row.len(), self.weights.len());
        dot(&self.weights, row) + self.bias
    }
}

/// Trains a linear soft-margin SVM with the solver defaults (tolerance
/// `1e-3`, sweep cap `10^4`) and collapses the dual solution to an explicit
/// weight vector.
pub fn fit_svm_linear<F: Real>(
    features: &Array2<F>,
    labels: &[u8],
    cost: F,
) -> Result<SvmModel<F>, ModelError> {
    let sol = solve_dual(features, labels, &SvmKernel::Linear, cost, F::of(STOP_TOL), MAX_SWEEPS)?;
    let n = features.shape()[0];
    let d = features.shape()[1];
    let y = signed_labels::<F>(labels);
    let mut weights = vec![F::zero(); d];
    for i in 0..n {
        if sol.alpha[i] > F::zero() {
            let scale = sol.alpha[i] * y[i];
            for f in 0..d {
                weights[f] += scale * features[[i, f]];
            }
        }
    }
    Ok(SvmModel {
        weights,
        bias: sol.bias,
        alpha: sol.alpha,
        cost,
        converged: sol.converged,
        sweeps: sol.sweeps,
    })
}

/// Decision value of a dual solution under an arbitrary kernel:
/// `sum_i alpha_i y_i K(x_i, query) + b`.
pub fn kernel_decision<F: Real>(
    features: &Array2<F>,
    labels: &[u8],
    solution: &DualSolution<F>,
    kernel: &SvmKernel,
    query: &[F],
) -> F {
    let n = features.shape()[0];
    let d = features.shape()[1];
    debug_assert_eq!(query.len(), d);
    let flat = features.as_slice().expect("feature table is contiguous");
    let y = signed_labels::<F>(labels);
    let mut acc = solution.bias;
    for i in 0..n {
        if solution.alpha[i] > F::zero() {
            acc += solution.alpha[i] * y[i] * kernel.eval(&flat[i * d..(i + 1) * d], query);
        }
    }
    acc
}

/// Largest violation of the optimality conditions across training rows:
/// zero multipliers must sit on or outside the margin, bound multipliers on
/// or inside it, and free multipliers exactly on it.
pub fn max_kkt_violation<F: Real>(
    features: &Array2<F>,
    labels: &[u8],
    solution: &DualSolution<F>,
    kernel: &SvmKernel,
    cost: F,
) -> F {
    let n = features.shape()[0];
    let d = features.shape()[1];
    let flat = features.as_slice().expect("feature table is contiguous");
    let y = signed_labels::<F>(labels);
    let mut worst = F::zero();
    for i in 0..n {
        let f_i = kernel_decision(features, labels, solution, kernel, &flat[i * d..(i + 1) * d]);
        let margin = y[i] * f_i;
        let a = solution.alpha[i];
        let violation = if a <= F::zero() {
            (F::one() - margin).max(F::zero())
        } else if a >= cost {
            (margin - F::one()).max(F::zero())
        } else {
            (margin - F::one()).abs()
        };
        worst = worst.max(violation);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    /// Primal soft-margin objective for the linear kernel.
    fn primal_objective(features: &Array2<f64>, labels: &[u8], model: &SvmModel<f64>) -> f64 {
        let mut obj = 0.5 * dot(&model.weights, &model.weights);
        for (i, &l) in labels.iter().enumerate() {
            let y = if l == 1 { 1.0 } else { -1.0 };
            let row: Vec<f64> = (0..features.shape()[1]).map(|j| features[[i, j]]).collect();
            let hinge = (1.0 - y * model.decision_value(&row)).max(0.0);
            obj += model.cost * hinge;
        }
        obj
    }

    /// Dual objective `e'a - (1/2) a'Qa` for the linear kernel.
    fn dual_objective(features: &Array2<f64>, labels: &[u8], alpha: &[f64]) -> f64 {
        let n = features.shape()[0];
        let d = features.shape()[1];
        let mut w = vec![0.0; d];
        for i in 0..n {
            let y = if labels[i] == 1 { 1.0 } else { -1.0 };
            for f in 0..d {
                w[f] += alpha[i] * y * features[[i, f]];
            }
        }
        alpha.iter().sum::<f64>() - 0.5 * dot(&w, &w)
    }

    #[test]
    fn two_symmetric_points_give_the_textbook_separator() {
        let features = array![[-1.0], [1.0]];
        let labels = vec![0u8, 1];
        let model = fit_svm_linear(&features, &labels, 1.0).unwrap();
        assert!(model.converged);
        assert!(approx(model.weights[0], 1.0, 1e-9), "weight {}", model.weights[0]);
        assert!(approx(model.bias, 0.0, 1e-9), "bias {}", model.bias);
        assert!(approx(model.alpha[0], 0.5, 1e-9));
        assert!(approx(model.alpha[1], 0.5, 1e-9));
        assert_eq!(model.n_support(), 2);
        // Margin points sit exactly at decision value -1 and +1.
        assert!(approx(model.decision_value(&[-1.0]), -1.0, 1e-9));
        assert!(approx(model.decision_value(&[1.0]), 1.0, 1e-9));
    }

    #[test]
    fn asymmetric_points_put_the_boundary_at_the_midpoint() {
        let features = array![[-1.0], [3.0]];
        let labels = vec![0u8, 1];
        let model = fit_svm_linear(&features, &labels, 1.0).unwrap();
        assert!(approx(model.weights[0], 0.5, 1e-9));
        assert!(approx(model.bias, -0.5, 1e-9));
        // Boundary crosses zero halfway between the points.
        assert!(approx(model.decision_value(&[1.0]), 0.0, 1e-9));
        assert!(approx(model.alpha[0], 0.125, 1e-9));
        assert!(approx(model.alpha[1], 0.125, 1e-9));
    }

    #[test]
    fn doubling_the_gap_halves_the_weight() {
        let features = array![[-2.0], [2.0]];
        let labels = vec![0u8, 1];
        let model = fit_svm_linear(&features, &labels, 1.0).unwrap();
        assert!(approx(model.weights[0], 0.5, 1e-9));
        assert!(approx(model.bias, 0.0, 1e-9));
    }

    #[test]
    fn coincident_opposite_points_hit_the_box_bound() {
        let features = array![[0.0], [0.0]];
        let labels = vec![0u8, 1];
        let model = fit_svm_linear(&features, &labels, 1.0).unwrap();
        assert!(model.converged);
        assert!(approx(model.alpha[0], 1.0, 1e-12));
        assert!(approx(model.alpha[1], 1.0, 1e-12));
        assert!(approx(model.weights[0], 0.0, 1e-12));
        assert!(approx(model.bias, 0.0, 1e-12));
        let sol = DualSolution {
            alpha: model.alpha.clone(),
            bias: model.bias,
            converged: true,
            sweeps: model.sweeps,
        };
        let kkt = max_kkt_violation(&features, &labels, &sol, &SvmKernel::Linear, 1.0);
        assert!(kkt <= 1e-9, "bound multipliers may sit inside the margin, kkt {kkt}");
    }

    #[test]
    fn rejects_degenerate_and_empty_input() {
        let features = array![[1.0], [2.0]];
        assert!(matches!(
            fit_svm_linear(&features, &[1, 1], 1.0),
            Err(ModelError::DegenerateLabels)
        ));
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(matches!(fit_svm_linear(&empty, &[], 1.0), Err(ModelError::EmptyTable)));
        assert!(matches!(
            fit_svm_linear(&features, &[0, 1], 0.0),
            Err(ModelError::NumericalFailure(_))
        ));
    }

    fn random_problem(n: usize, seed: u64, margin: f64) -> (Array2<f64>, Vec<u8>) {
        let mut rng = crate::rng::stream(seed, &[60]);
        let mut features = Array2::zeros((n, 2));
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let y = crate::rng::bernoulli01(&mut rng, 0.5);
            let side = if y == 1 { 1.0 } else { -1.0 };
            features[[i, 0]] = side * margin + crate::rng::gaussian_f64(&mut rng);
            features[[i, 1]] = crate::rng::gaussian_f64(&mut rng);
            labels.push(y);
        }
        if !labels.contains(&0) {
            labels[0] = 0;
        }
        if !labels.contains(&1) {
            labels[1] = 1;
        }
        (features, labels)
    }

    #[test]
    fn solver_satisfies_the_optimality_conditions() {
        for seed in 0..8u64 {
            let (features, labels) = random_problem(60, seed, 1.5);
            let model = fit_svm_linear(&features, &labels, 1.0).unwrap();
            assert!(model.converged, "seed {seed} did not converge");
            for &a in &model.alpha {
                assert!((-1e-12..=1.0 + 1e-12).contains(&a), "alpha {a} outside the box");
            }
            let sol = DualSolution {
                alpha: model.alpha.clone(),
                bias: model.bias,
                converged: model.converged,
                sweeps: model.sweeps,
            };
            let kkt = max_kkt_violation(&features, &labels, &sol, &SvmKernel::Linear, 1.0);
            assert!(kkt < 1e-3, "seed {seed}: kkt violation {kkt}");
        }
    }

    #[test]
    fn duality_gap_closes_on_noisy_data() {
        for seed in 0..5u64 {
            // Overlapping classes; many multipliers end up at the cost bound.
            let (features, labels) = random_problem(80, 100 + seed, 0.6);
            let model = fit_svm_linear(&features, &labels, 1.0).unwrap();
            let primal = primal_objective(&features, &labels, &model);
            let dual = dual_objective(&features, &labels, &model.alpha);
            assert!(dual <= primal + 1e-9, "weak duality must hold");
            let gap = (primal - dual) / primal.abs().max(1.0);
            assert!(gap < 1e-2, "seed {seed}: relative duality gap {gap}");
        }
    }

    #[test]
    fn radial_kernel_solves_a_problem_the_linear_kernel_cannot() {
        // Exclusive-or layout: opposite corners share a label.
        let features = array![[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]];
        let labels = vec![1u8, 1, 0, 0];
        let kernel = SvmKernel::Rbf { gamma: 1.0 };
        let sol = solve_dual(&features, &labels, &kernel, 10.0, 1e-3, MAX_SWEEPS).unwrap();
        assert!(sol.converged);
        for i in 0..4 {
            let row = [features[[i, 0]], features[[i, 1]]];
            let f = kernel_decision(&features, &labels, &sol, &kernel, &row);
            let want_positive = labels[i] == 1;
            assert_eq!(f > 0.0, want_positive, "point {i} misclassified, f {f}");
        }
        // The linear model cannot split these four points.
        let linear = fit_svm_linear(&features, &labels, 10.0).unwrap();
        let correct = (0..4)
            .filter(|&i| {
                let row = [features[[i, 0]], features[[i, 1]]];
                (linear.decision_value(&row) > 0.0) == (labels[i] == 1)
            })
            .count();
        assert!(correct < 4, "a linear separator cannot classify all corners");
    }

    #[test]
    fn polynomial_and_sigmoid_kernels_evaluate_as_documented() {
        let a = [1.0, 2.0];
        let b = [3.0, -1.0];
        // Inner product is 1; check each formula at that value.
        let poly = SvmKernel::Polynomial { degree: 2, gamma: 0.5, coef0: 1.0 };
        assert!(approx(poly.eval(&a, &b), (0.5 * 1.0 + 1.0) * (0.5 * 1.0 + 1.0), 1e-12));
        let rbf = SvmKernel::Rbf { gamma: 0.25 };
        let dist2 = (1.0f64 - 3.0).powi(2) + (2.0f64 + 1.0).powi(2);
        assert!(approx(rbf.eval(&a, &b), (-0.25 * dist2).exp(), 1e-12));
        let sig = SvmKernel::Sigmoid { gamma: 2.0, coef0: -1.0 };
        assert!(approx(sig.eval(&a, &b), (2.0f64 * 1.0 - 1.0).tanh(), 1e-12));
        assert_eq!(SvmKernel::conventional("radial", 4), Some(SvmKernel::Rbf { gamma: 0.25 }));
        assert_eq!(SvmKernel::conventional("unknown", 4), None);
    }

    #[test]
    fn narrower_precision_agrees_with_the_reference_solution() {
        let (features, labels) = random_problem(40, 7, 2.0);
        let model64 = fit_svm_linear(&features, &labels, 1.0).unwrap();
        let features32 = features.mapv(|v| v as f32);
        let model32 = fit_svm_linear(&features32, &labels, 1.0f32).unwrap();
        for (w64, w32) in model64.weights.iter().zip(&model32.weights) {
            assert!(approx(*w64, *w32 as f64, 1e-2), "weights diverge: {w64} vs {w32}");
        }
        assert!(approx(model64.bias, model32.bias as f64, 1e-2));
    }
}
