use featboot_core::linalg::{column_center, Matrix, Vector};
use featboot_core::{Error, Result};
use serde::{Deserialize, Serialize};

/// Ridge solution on centered data; predictions are `z·coef + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeFit {
    pub coef: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
}

impl RidgeFit {
    pub fn predict(&self, z: &[f64]) -> f64 {
        self.intercept + z.iter().zip(&self.coef).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn predict_rows(&self, z: &Matrix) -> Vector {
        let coef = Vector::from_column_slice(&self.coef);
        (z * coef).add_scalar(self.intercept)
    }
}

/// `β̂ = (ZcᵀZc + λI)⁻¹ Zcᵀ yc` with `Zc`, `yc` centered; the intercept
/// is `ȳ − z̄ᵀβ̂`.
pub fn fit_ridge(z: &Matrix, y: &Vector, lambda: f64) -> Result<RidgeFit> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid("lambda", format!("must be positive and finite, got {lambda}")));
    }
    if z.nrows() != y.len() {
        return Err(Error::shape(format!("{} responses", z.nrows()), format!("{}", y.len())));
    }
    let (zc, means) = column_center(z)?;
    let y_mean = y.mean();
    let yc = y.add_scalar(-y_mean);
    let gram = zc.transpose() * &zc;
    let rhs = zc.transpose() * yc;
    let coef = solve_shifted(&gram, &rhs, lambda)?;
    Ok(RidgeFit {
        intercept: y_mean - means.dot(&coef),
        coef: coef.iter().copied().collect(),
        lambda,
    })
}

fn solve_shifted(gram: &Matrix, rhs: &Vector, lambda: f64) -> Result<Vector> {
    let mut a = gram.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += lambda;
    }
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::Factorization("ridge system is not positive definite".into()))?;
    Ok(chol.solve(rhs))
}

/// Mean held-out squared error of each `λ` under `folds`-fold CV, where row
/// `i` belongs to fold `i mod folds`. Returns the best fit refit on all
/// rows, plus the CV curve.
pub fn cross_validate(z: &Matrix, y: &Vector, lambdas: &[f64], folds: usize) -> Result<(RidgeFit, Vec<f64>)> {
    if lambdas.is_empty() {
        return Err(Error::invalid("lambdas", "need at least one candidate"));
    }
    if folds < 2 || folds > z.nrows() {
        return Err(Error::invalid("folds", format!("need 2 <= folds <= {}, got {folds}", z.nrows())));
    }
    let mut errors = vec![0.0; lambdas.len()];
    for f in 0..folds {
        let train: Vec<usize> = (0..z.nrows()).filter(|i| i % folds != f).collect();
        let test: Vec<usize> = (0..z.nrows()).filter(|i| i % folds == f).collect();
        let zt = z.select_rows(&train);
        let yt = y.select_rows(&train);
        let (zc, means) = column_center(&zt)?;
        let y_mean = yt.mean();
        let gram = zc.transpose() * &zc;
        let rhs = zc.transpose() * yt.add_scalar(-y_mean);
        let zv = z.select_rows(&test);
        let yv = y.select_rows(&test);
        for (e, &lambda) in errors.iter_mut().zip(lambdas) {
            if !(lambda > 0.0 && lambda.is_finite()) {
                return Err(Error::invalid("lambda", format!("must be positive and finite, got {lambda}")));
            }
            let coef = solve_shifted(&gram, &rhs, lambda)?;
            let pred = (&zv * &coef).add_scalar(y_mean - means.dot(&coef));
            *e += (pred - &yv).norm_squared();
        }
    }
    errors.iter_mut().for_each(|e| *e /= z.nrows() as f64);
    // First minimum wins ties, so the result does not depend on float noise
    // ordering beyond the grid order.
    let best = errors
        .iter()
        .enumerate()
        .fold(0, |b, (i, e)| if *e < errors[b] { i } else { b });
    Ok((fit_ridge(z, y, lambdas[best])?, errors))
}

/// Ridge objective `‖yc − Zc β‖² + λ‖β‖²` on centered data.
pub fn ridge_objective(z: &Matrix, y: &Vector, coef: &[f64], lambda: f64) -> Result<f64> {
    let (zc, _) = column_center(z)?;
    let yc = y.add_scalar(-y.mean());
    let b = Vector::from_column_slice(coef);
    Ok((yc - zc * &b).norm_squared() + lambda * b.norm_squared())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_lambda() {
        let z = Matrix::identity(3, 2);
        let y = Vector::zeros(3);
        assert!(fit_ridge(&z, &y, 0.0).is_err());
        assert!(fit_ridge(&z, &y, -1.0).is_err());
        assert!(fit_ridge(&z, &Vector::zeros(4), 1.0).is_err());
    }

    #[test]
    fn huge_lambda_predicts_mean() {
        let z = Matrix::from_fn(6, 3, |i, j| ((i * 5 + j * 3) % 7) as f64);
        let y = Vector::from_fn(6, |i, _| i as f64);
        let fit = fit_ridge(&z, &y, 1e12).unwrap();
        assert!(fit.coef.iter().all(|c| c.abs() < 1e-9));
        for i in 0..6 {
            let row: Vec<f64> = z.row(i).iter().copied().collect();
            assert!((fit.predict(&row) - 2.5).abs() < 1e-8);
        }
    }

    #[test]
    fn cv_prefers_small_lambda_for_clean_signal() {
        let z = Matrix::from_fn(40, 3, |i, j| (((i + 1) * (j + 2) * 7919) % 101) as f64 / 50.0);
        let y = Vector::from_fn(40, |i, _| 2.0 * z[(i, 0)] - z[(i, 2)]);
        let (fit, curve) = cross_validate(&z, &y, &[1e-3, 1.0, 1e3], 5).unwrap();
        assert_eq!(fit.lambda, 1e-3);
        assert!(curve[0] < curve[2]);
        assert!(cross_validate(&z, &y, &[1.0], 1).is_err());
    }
}
