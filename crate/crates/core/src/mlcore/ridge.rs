//! Multi-output ridge regression with an unpenalized intercept.
//!
//! Minimizes `|Y - XW - 1b'|^2 + lambda |W|^2`. The data are centered so the
//! intercept drops out, then the normal equations are solved by Cholesky:
//! in primal form `(Xc'Xc + lambda I) W = Xc'Yc` when there are at least as
//! many rows as features, otherwise in dual form
//! `W = Xc' (Xc Xc' + lambda I)^-1 Yc`. Both give the same minimizer.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RidgeConfig {
    pub lambda: f64,
}

impl Default for RidgeConfig {
    fn default() -> Self {
        Self { lambda: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearEncoder {
    /// `input_dim x output_dim`
    pub weights: Array2<f64>,
    pub intercept: Array1<f64>,
    pub ridge_lambda: f64,
}

/// In-place Cholesky factorization `A = L L'` of a symmetric matrix; the
/// lower triangle of `a` is overwritten with `L`. Fails when a pivot is not
/// clearly positive.
fn cholesky(a: &mut Array2<f64>) -> Result<()> {
    let n = a.nrows();
    let scale = (0..n)
        .map(|i| a[[i, i]].abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let floor = scale * n as f64 * f64::EPSILON * 16.0;
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= a[[j, k]] * a[[j, k]];
        }
        if d.is_nan() || d <= floor {
            return Err(Error::SingularSystem);
        }
        let d = d.sqrt();
        a[[j, j]] = d;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= a[[i, k]] * a[[j, k]];
            }
            a[[i, j]] = s / d;
        }
    }
    Ok(())
}

/// Solves `L L' X = B` for every column of `b`, in place.
fn cholesky_solve(l: &Array2<f64>, b: &mut Array2<f64>) {
    let n = l.nrows();
    for mut col in b.axis_iter_mut(Axis(1)) {
        for i in 0..n {
            let mut s = col[i];
            for k in 0..i {
                s -= l[[i, k]] * col[k];
            }
            col[i] = s / l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = col[i];
            for k in (i + 1)..n {
                s -= l[[k, i]] * col[k];
            }
            col[i] = s / l[[i, i]];
        }
    }
}

fn add_diagonal(a: &mut Array2<f64>, lambda: f64) {
    for i in 0..a.nrows() {
        a[[i, i]] += lambda;
    }
}

pub fn ridge_fit(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, lambda: f64) -> Result<LinearEncoder> {
    if x.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch {
            context: "ridge inputs vs targets".into(),
            expected: x.nrows(),
            found: y.nrows(),
        });
    }
    if x.nrows() == 0 {
        return Err(Error::InvalidArgument("ridge needs at least one sample".into()));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ridge input".into()));
    }

    let x_mean = x.mean_axis(Axis(0)).expect("nonempty");
    let y_mean = y.mean_axis(Axis(0)).expect("nonempty");
    let xc = &x - &x_mean;
    let yc = &y - &y_mean;
    let (n, d) = xc.dim();

    let weights = if d <= n {
        let mut gram = xc.t().dot(&xc);
        add_diagonal(&mut gram, lambda);
        cholesky(&mut gram)?;
        let mut rhs = xc.t().dot(&yc);
        cholesky_solve(&gram, &mut rhs);
        rhs
    } else {
        let mut gram = xc.dot(&xc.t());
        add_diagonal(&mut gram, lambda);
        cholesky(&mut gram)?;
        let mut rhs = yc.to_owned();
        cholesky_solve(&gram, &mut rhs);
        xc.t().dot(&rhs)
    };
    let intercept = &y_mean - &x_mean.dot(&weights);
    Ok(LinearEncoder {
        weights,
        intercept,
        ridge_lambda: lambda,
    })
}

pub fn ridge_predict(encoder: &LinearEncoder, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if x.ncols() != encoder.weights.nrows() {
        return Err(Error::DimensionMismatch {
            context: "ridge prediction inputs".into(),
            expected: encoder.weights.nrows(),
            found: x.ncols(),
        });
    }
    Ok(x.dot(&encoder.weights) + &encoder.intercept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng;
    use ndarray::array;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(shape: (usize, usize), seed: u64) -> Array2<f64> {
        let mut g = rng(seed);
        Array2::from_shape_fn(shape, |_| StandardNormal.sample(&mut g))
    }

    #[test]
    fn identity_map_is_interpolated() {
        let x = gaussian((12, 4), 1);
        let enc = ridge_fit(x.view(), x.view(), 0.0).unwrap();
        for ((i, j), w) in enc.weights.indexed_iter() {
            let expected = if i == j { 1.0 } else { 0.0 };
            assert!((w - expected).abs() < 1e-10);
        }
        assert!(enc.intercept.iter().all(|b| b.abs() < 1e-10));
    }

    #[test]
    fn constant_target_goes_to_intercept() {
        let x = Array2::ones((6, 1));
        let y = Array2::from_elem((6, 2), 3.5);
        let enc = ridge_fit(x.view(), y.view(), 1.0).unwrap();
        assert!(enc.weights.iter().all(|&w| w == 0.0));
        assert_eq!(enc.intercept, array![3.5, 3.5]);
    }

    #[test]
    fn planted_weights_are_recovered() {
        let x = gaussian((20, 5), 2);
        let w_star = gaussian((5, 3), 3);
        let b_star = array![0.5, -1.0, 2.0];
        let y = x.dot(&w_star) + &b_star;
        let enc = ridge_fit(x.view(), y.view(), 1e-8).unwrap();
        for (a, b) in enc.weights.iter().zip(w_star.iter()) {
            assert!((a - b).abs() < 1e-4);
        }
        let fresh = gaussian((7, 5), 4);
        let predicted = ridge_predict(&enc, fresh.view()).unwrap();
        let truth = fresh.dot(&w_star) + &b_star;
        for (a, b) in predicted.iter().zip(truth.iter()) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn rank_deficient_without_penalty_fails() {
        let mut x = gaussian((10, 3), 5);
        let col = x.column(0).to_owned();
        x.column_mut(2).assign(&(&col * 2.0));
        let y = gaussian((10, 2), 6);
        assert!(matches!(ridge_fit(x.view(), y.view(), 0.0), Err(Error::SingularSystem)));
        assert!(ridge_fit(x.view(), y.view(), 0.1).is_ok());
    }

    #[test]
    fn primal_and_dual_forms_agree() {
        // 8 x 12 uses the dual form; compare with the primal normal equations
        // solved on the same data through an explicit d x d system.
        let x = gaussian((8, 12), 7);
        let y = gaussian((8, 3), 8);
        let lambda = 0.7;
        let dual = ridge_fit(x.view(), y.view(), lambda).unwrap();
        let xc = &x - &x.mean_axis(Axis(0)).unwrap();
        let yc = &y - &y.mean_axis(Axis(0)).unwrap();
        let mut gram = xc.t().dot(&xc);
        add_diagonal(&mut gram, lambda);
        cholesky(&mut gram).unwrap();
        let mut primal = xc.t().dot(&yc);
        cholesky_solve(&gram, &mut primal);
        for (a, b) in dual.weights.iter().zip(primal.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn prediction_edge_cases() {
        let zero = LinearEncoder {
            weights: Array2::zeros((3, 2)),
            intercept: array![1.0, -2.0],
            ridge_lambda: 1.0,
        };
        let x = gaussian((4, 3), 9);
        let p = ridge_predict(&zero, x.view()).unwrap();
        assert!(p.axis_iter(Axis(0)).all(|r| r == array![1.0, -2.0]));
        let identity = LinearEncoder {
            weights: Array2::eye(3),
            intercept: Array1::zeros(3),
            ridge_lambda: 0.0,
        };
        assert_eq!(ridge_predict(&identity, x.view()).unwrap(), x);
        assert!(ridge_predict(&identity, gaussian((2, 4), 1).view()).is_err());
    }
}
