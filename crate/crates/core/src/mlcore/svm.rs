//! Soft-margin binary SVM with an RBF kernel, trained by SMO.
//!
//! The solver follows the libsvm formulation: minimize
//! `1/2 a'Qa - e'a` subject to `0 <= a_i <= C` and `y'a = 0`, where
//! `Q_ij = y_i y_j K(x_i, x_j)`. Working pairs are picked by maximal
//! violation for `i` and second-order gain for `j`. Iteration stops once the
//! maximal KKT violation `m(a) - M(a)` drops below the tolerance.
//!
//! Kernels are precomputed in full; the problems this crate solves have at
//! most a few hundred training points.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GammaMode {
    /// `1 / (n_features * Var(X))` over all entries of the training matrix,
    /// falling back to `1 / n_features` when the variance is zero.
    Scale,
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    pub c: f64,
    pub gamma: GammaMode,
    /// Stop when the maximal KKT violation falls below this.
    pub tolerance: f64,
    /// Iteration cap, in passes of `n` pair updates.
    pub max_passes: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            gamma: GammaMode::Scale,
            tolerance: 1e-3,
            max_passes: 10_000,
        }
    }
}

impl SvmConfig {
    fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::InvalidArgument(format!("C must be positive, got {}", self.c)));
        }
        if let GammaMode::Value(g) = self.gamma {
            if !(g.is_finite() && g > 0.0) {
                return Err(Error::InvalidArgument(format!("gamma must be positive, got {g}")));
            }
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::InvalidArgument("SMO tolerance must be positive".into()));
        }
        Ok(())
    }

    /// Resolves the kernel width for a training matrix.
    pub fn resolve_gamma(&self, x: ArrayView2<'_, f64>) -> f64 {
        match self.gamma {
            GammaMode::Value(g) => g,
            GammaMode::Scale => scale_gamma(x),
        }
    }
}

/// `1 / (d * Var(X))` with population variance over every entry; `1 / d` when
/// the variance is zero.
pub fn scale_gamma(x: ArrayView2<'_, f64>) -> f64 {
    let d = x.ncols().max(1) as f64;
    let n = x.len() as f64;
    if n == 0.0 {
        return 1.0 / d;
    }
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var > 0.0 {
        1.0 / (d * var)
    } else {
        1.0 / d
    }
}

/// Squared Euclidean distance, accumulated term by term.
#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// All pairwise squared distances between rows, as an `n x n` row-major buffer.
pub fn pairwise_squared_distances(x: ArrayView2<'_, f64>) -> Vec<f64> {
    let n = x.nrows();
    let rows: Vec<Vec<f64>> = x.axis_iter(Axis(0)).map(|r| r.to_vec()).collect();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = squared_distance(&rows[i], &rows[j]);
            out[i * n + j] = d;
            out[j * n + i] = d;
        }
    }
    out
}

/// Result of the dual optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    /// Decision offset `b` in `f(x) = sum_i a_i y_i K(x_i, x) + b`.
    pub bias: f64,
    pub iterations: usize,
    /// `m(a) - M(a)` at termination.
    pub max_violation: f64,
    pub converged: bool,
}

/// Runs SMO on a precomputed `n x n` kernel matrix (row-major).
///
/// Labels must be `+1.0` / `-1.0`. The caller is responsible for checking
/// that both classes are present.
pub fn solve_dual(kernel: &[f64], y: &[f64], c: f64, tolerance: f64, max_iterations: usize) -> DualSolution {
    let n = y.len();
    debug_assert_eq!(kernel.len(), n * n);
    let k = |i: usize, j: usize| kernel[i * n + j];

    let mut alpha = vec![0.0; n];
    // gradient of the dual objective: G = Qa - e
    let mut grad = vec![-1.0; n];
    let mut iterations = 0;
    let mut max_violation;
    let mut converged = false;

    loop {
        // i: maximal violator in I_up
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..n {
            let in_up = if y[t] > 0.0 { alpha[t] < c } else { alpha[t] > 0.0 };
            if in_up {
                let v = -y[t] * grad[t];
                if v >= gmax {
                    gmax = v;
                    i_sel = t;
                }
            }
        }

        // j: second-order selection over I_low
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = usize::MAX;
        let mut obj_min = f64::INFINITY;
        for t in 0..n {
            let in_low = if y[t] > 0.0 { alpha[t] > 0.0 } else { alpha[t] < c };
            if !in_low {
                continue;
            }
            let v = y[t] * grad[t];
            if v >= gmax2 {
                gmax2 = v;
            }
            if i_sel == usize::MAX {
                continue;
            }
            let grad_diff = gmax + v;
            if grad_diff > 0.0 {
                let quad = k(i_sel, i_sel) + k(t, t) - 2.0 * k(i_sel, t);
                let obj = -(grad_diff * grad_diff) / if quad > 0.0 { quad } else { TAU };
                if obj <= obj_min {
                    obj_min = obj;
                    j_sel = t;
                }
            }
        }

        max_violation = gmax + gmax2;
        if max_violation < tolerance || j_sel == usize::MAX || i_sel == usize::MAX {
            converged = true;
            break;
        }
        if iterations >= max_iterations {
            break;
        }
        iterations += 1;

        let (i, j) = (i_sel, j_sel);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = (k(i, i) + k(j, j) - 2.0 * k(i, j)).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (k(i, i) + k(j, j) - 2.0 * k(i, j)).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let d_i = (alpha[i] - old_i) * y[i];
        let d_j = (alpha[j] - old_j) * y[j];
        for t in 0..n {
            grad[t] += y[t] * (k(t, i) * d_i + k(t, j) * d_j);
        }
    }

    // Offset from free vectors; midpoint of the feasible interval otherwise.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (ub + lb) / 2.0
    };

    DualSolution {
        alpha,
        bias: -rho,
        iterations,
        max_violation,
        converged,
    }
}

/// Trained RBF-kernel SVM.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    support_vectors: Array2<f64>,
    dual_coefficients: Vec<f64>,
    bias: f64,
    gamma: f64,
    regularization_c: f64,
}

impl SvmModel {
    /// Assembles a model from its parts. `dual_coefficients[i]` is `a_i y_i`
    /// for `support_vectors.row(i)`.
    pub fn new(
        support_vectors: Array2<f64>,
        dual_coefficients: Vec<f64>,
        bias: f64,
        gamma: f64,
        regularization_c: f64,
    ) -> Result<Self> {
        if support_vectors.nrows() != dual_coefficients.len() {
            return Err(Error::DimensionMismatch {
                context: "support vectors vs dual coefficients".into(),
                expected: support_vectors.nrows(),
                found: dual_coefficients.len(),
            });
        }
        Ok(Self {
            support_vectors,
            dual_coefficients,
            bias,
            gamma,
            regularization_c,
        })
    }

    pub fn support_vectors(&self) -> &Array2<f64> {
        &self.support_vectors
    }

    pub fn dual_coefficients(&self) -> &[f64] {
        &self.dual_coefficients
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn regularization_c(&self) -> f64 {
        self.regularization_c
    }

    pub fn n_features(&self) -> usize {
        self.support_vectors.ncols()
    }

    pub fn decision_function(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.n_features() {
            return Err(Error::DimensionMismatch {
                context: "svm test features".into(),
                expected: self.n_features(),
                found: x.ncols(),
            });
        }
        let svs: Vec<Vec<f64>> = self.support_vectors.axis_iter(Axis(0)).map(|r| r.to_vec()).collect();
        Ok(x.axis_iter(Axis(0))
            .map(|row| {
                let row = row.to_vec();
                let s: f64 = svs
                    .iter()
                    .zip(&self.dual_coefficients)
                    .map(|(sv, coef)| coef * (-self.gamma * squared_distance(sv, &row)).exp())
                    .sum();
                s + self.bias
            })
            .collect())
    }
}

/// Sign of a decision value; exact zero maps to `+1`.
#[inline]
pub fn decision_label(value: f64) -> f64 {
    if value >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

pub(crate) fn check_binary_labels(y: &[f64]) -> Result<()> {
    let mut pos = false;
    let mut neg = false;
    for &v in y {
        if v == 1.0 {
            pos = true;
        } else if v == -1.0 {
            neg = true;
        } else {
            return Err(Error::InvalidArgument(format!("labels must be +1 or -1, got {v}")));
        }
    }
    if !(pos && neg) {
        return Err(Error::Degenerate("training labels contain a single class".into()));
    }
    Ok(())
}

pub(crate) fn max_iterations(config: &SvmConfig, n: usize) -> usize {
    config.max_passes.saturating_mul(n.max(1))
}

pub fn svm_fit(x: ArrayView2<'_, f64>, y: &[f64], config: &SvmConfig) -> Result<SvmModel> {
    config.validate()?;
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "svm training rows vs labels".into(),
            expected: x.nrows(),
            found: y.len(),
        });
    }
    if x.nrows() < 2 {
        return Err(Error::InvalidArgument("svm needs at least 2 training points".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("svm features".into()));
    }
    check_binary_labels(y)?;

    let gamma = config.resolve_gamma(x);
    let kernel: Vec<f64> = pairwise_squared_distances(x)
        .into_iter()
        .map(|d| (-gamma * d).exp())
        .collect();
    let solution = solve_dual(&kernel, y, config.c, config.tolerance, max_iterations(config, y.len()));

    let support: Vec<usize> = (0..y.len()).filter(|&i| solution.alpha[i] > 0.0).collect();
    let support_vectors = x.select(Axis(0), &support);
    let coefficients = support.iter().map(|&i| solution.alpha[i] * y[i]).collect();
    SvmModel::new(support_vectors, coefficients, solution.bias, gamma, config.c)
}

pub fn svm_classify(model: &SvmModel, x_test: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    Ok(model
        .decision_function(x_test)?
        .into_iter()
        .map(decision_label)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn xor_is_separated() {
        let x = array![[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]];
        let y = [1.0, 1.0, -1.0, -1.0];
        let config = SvmConfig {
            c: 10.0,
            ..Default::default()
        };
        let model = svm_fit(x.view(), &y, &config).unwrap();
        assert_eq!(svm_classify(&model, x.view()).unwrap(), y.to_vec());
        let sum: f64 = model.dual_coefficients().iter().sum();
        assert!(sum.abs() < 1e-8);
    }

    #[test]
    fn xor_with_default_c() {
        let x = array![[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]];
        let y = [1.0, 1.0, -1.0, -1.0];
        let model = svm_fit(x.view(), &y, &SvmConfig::default()).unwrap();
        assert_eq!(svm_classify(&model, x.view()).unwrap(), y.to_vec());
    }

    #[test]
    fn scale_gamma_matches_definition() {
        let x = array![[0.0, 2.0], [2.0, 0.0]];
        // entries {0,2,2,0}: mean 1, variance 1
        assert_eq!(scale_gamma(x.view()), 0.5);
        assert_eq!(scale_gamma(array![[3.0, 3.0, 3.0]].view()), 1.0 / 3.0);
    }

    #[test]
    fn single_class_is_rejected() {
        let x = array![[0.0], [1.0], [2.0]];
        let err = svm_fit(x.view(), &[1.0, 1.0, 1.0], &SvmConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }

    #[test]
    fn non_finite_is_rejected() {
        let x = array![[0.0], [f64::NAN]];
        assert!(matches!(
            svm_fit(x.view(), &[1.0, -1.0], &SvmConfig::default()),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn zero_decision_maps_to_positive() {
        let model = SvmModel::new(array![[0.0, 0.0]], vec![0.0], 0.0, 1.0, 1.0).unwrap();
        assert_eq!(model.decision_function(array![[5.0, 5.0]].view()).unwrap(), vec![0.0]);
        assert_eq!(svm_classify(&model, array![[5.0, 5.0]].view()).unwrap(), vec![1.0]);
    }

    #[test]
    fn wrong_dimension_is_rejected() {
        let model = SvmModel::new(array![[0.0, 0.0]], vec![1.0], 0.0, 1.0, 1.0).unwrap();
        assert!(matches!(
            svm_classify(&model, array![[1.0, 2.0, 3.0]].view()),
            Err(Error::DimensionMismatch {
                expected: 2,
                found: 3,
                ..
            })
        ));
    }
}
