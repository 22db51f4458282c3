//! Gaussian confidence ellipses (ellipsoids for `K > 2`) built from
//! per-sample clouds of aligned bootstrap coordinates.

use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

/// Relative diagonal loading, as a fraction of the mean variance.
pub const REGULARIZATION_SCALE: f64 = 1e-10;
/// Absolute diagonal loading floor.
pub const REGULARIZATION_FLOOR: f64 = 1e-12;

/// Upper `p` quantile of the chi-square distribution with `k` degrees of
/// freedom, `χ²_k(p)`.
pub fn chi2_quantile(k: usize, p: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("k", "degrees of freedom must be positive"));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid("p", format!("probability must be in (0, 1), got {p}")));
    }
    Ok(2.0 * puruspe::invgammp(p, k as f64 / 2.0))
}

#[derive(Debug, Clone)]
pub struct Ellipse {
    pub mean: Vector,
    /// Regularized covariance.
    pub covariance: Matrix,
    pub regularization: f64,
    precision: Matrix,
}

impl Ellipse {
    /// Mean and unbiased covariance of the rows of `cloud` (`B x K`), with
    /// diagonal loading so the covariance is invertible.
    pub fn from_cloud(cloud: &Matrix) -> Result<Self> {
        let b = cloud.nrows();
        if b < 2 {
            return Err(Error::TooFew {
                what: "replicates per ellipse",
                min: 2,
                got: b,
            });
        }
        let k = cloud.ncols();
        let mean = cloud.row_mean().transpose();
        let mut centered = cloud.clone();
        for mut row in centered.row_iter_mut() {
            row -= mean.transpose();
        }
        let mut cov = centered.transpose() * &centered / (b as f64 - 1.0);
        // Exact symmetry.
        for i in 0..k {
            for j in 0..i {
                let v = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        let reg = (REGULARIZATION_SCALE * cov.trace() / k as f64).max(REGULARIZATION_FLOOR);
        for i in 0..k {
            cov[(i, i)] += reg;
        }
        Self::new(mean, cov, reg)
    }

    pub fn new(mean: Vector, covariance: Matrix, regularization: f64) -> Result<Self> {
        let k = mean.len();
        if covariance.shape() != (k, k) {
            return Err(Error::shape(
                format!("{k}x{k}"),
                format!("{}x{}", covariance.nrows(), covariance.ncols()),
            ));
        }
        let chol = covariance
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Factorization("covariance is not positive definite".into()))?;
        Ok(Self {
            mean,
            precision: chol.inverse(),
            covariance,
            regularization,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Squared Mahalanobis distance `(x − μ)ᵀ Σ⁻¹ (x − μ)`.
    pub fn mahalanobis_sq(&self, x: &Vector) -> f64 {
        let d = x - &self.mean;
        d.dot(&(&self.precision * &d))
    }

    /// Semi-axis lengths (descending) and their directions as columns, for
    /// the region `{x : mahalanobis_sq(x) <= quantile}`.
    pub fn axes(&self, quantile: f64) -> (Vector, Matrix) {
        let eig = SymmetricEigen::new(self.covariance.clone());
        let mut order: Vec<usize> = (0..self.dim()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let lengths = Vector::from_iterator(
            self.dim(),
            order.iter().map(|&i| (quantile * eig.eigenvalues[i].max(0.0)).sqrt()),
        );
        let dirs = Matrix::from_columns(
            &order
                .iter()
                .map(|&i| eig.eigenvectors.column(i).into_owned())
                .collect::<Vec<_>>(),
        );
        (lengths, dirs)
    }

    /// Area for `K = 2` (`π q √det Σ`); the ellipsoid volume in general.
    pub fn area(&self, quantile: f64) -> f64 {
        let k = self.dim() as f64;
        let unit_ball = std::f64::consts::PI.powf(k / 2.0) / puruspe::gamma(k / 2.0 + 1.0);
        unit_ball * quantile.powf(k / 2.0) * self.covariance.determinant().max(0.0).sqrt()
    }

    /// `sqrt(1 − λ_min/λ_max)`; 0 for a circle.
    pub fn eccentricity(&self) -> f64 {
        let eig = SymmetricEigen::new(self.covariance.clone());
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min().max(0.0);
        if max <= 0.0 {
            0.0
        } else {
            (1.0 - min / max).max(0.0).sqrt()
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConfidenceEllipseSet {
    pub ellipses: Vec<Ellipse>,
    /// `1 − α`
    pub level: f64,
    /// `χ²_K(1 − α)`
    pub quantile: f64,
}

impl ConfidenceEllipseSet {
    pub fn new(ellipses: Vec<Ellipse>, alpha: f64) -> Result<Self> {
        let k = ellipses.first().map(Ellipse::dim).ok_or(Error::Empty)?;
        if ellipses.iter().any(|e| e.dim() != k) {
            return Err(Error::invalid("ellipses", "mixed dimensions"));
        }
        Ok(Self {
            quantile: chi2_quantile(k, 1.0 - alpha)?,
            level: 1.0 - alpha,
            ellipses,
        })
    }

    pub fn len(&self) -> usize {
        self.ellipses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ellipses.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.ellipses[0].dim()
    }

    pub fn contains(&self, i: usize, x: &Vector) -> bool {
        self.ellipses[i].mahalanobis_sq(x) <= self.quantile
    }

    pub fn area(&self, i: usize) -> f64 {
        self.ellipses[i].area(self.quantile)
    }

    pub fn mean_area(&self) -> f64 {
        (0..self.len()).map(|i| self.area(i)).sum::<f64>() / self.len() as f64
    }

    /// Ellipse centers stacked as an `n x K` matrix.
    pub fn centers(&self) -> Matrix {
        let k = self.dim();
        Matrix::from_fn(self.len(), k, |i, j| self.ellipses[i].mean[j])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn chi2_two_dof() {
        // χ²₂ has closed-form quantile −2 ln(1 − p).
        let q = chi2_quantile(2, 0.95).unwrap();
        assert_relative_eq!(q, -2.0 * 0.05f64.ln(), epsilon = 1e-10);
        assert!((q - 5.991).abs() < 1e-3);
        assert!((chi2_quantile(1, 0.95).unwrap() - 3.841459).abs() < 1e-5);
        assert!((chi2_quantile(3, 0.95).unwrap() - 7.814728).abs() < 1e-5);
        assert!(chi2_quantile(2, 1.0).is_err());
    }

    #[test]
    fn degenerate_cloud_hits_floor() {
        let cloud = Matrix::from_fn(10, 2, |_, j| j as f64 + 1.0);
        let e = Ellipse::from_cloud(&cloud).unwrap();
        assert_eq!(e.regularization, REGULARIZATION_FLOOR);
        assert!((&e.covariance - Matrix::identity(2, 2) * REGULARIZATION_FLOOR).amax() < 1e-24);
        let q = chi2_quantile(2, 0.95).unwrap();
        let (axes, _) = e.axes(q);
        assert_relative_eq!(axes[0], (q * REGULARIZATION_FLOOR).sqrt(), max_relative = 1e-9);
        assert_relative_eq!(axes[1], (q * REGULARIZATION_FLOOR).sqrt(), max_relative = 1e-9);
    }

    #[test]
    fn covariance_unbiased() {
        let cloud = Matrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        let e = Ellipse::from_cloud(&cloud).unwrap();
        assert_relative_eq!(e.mean[0], 2.0);
        assert_relative_eq!(e.covariance[(0, 0)], 1.0 + 1e-10, epsilon = 1e-15);
        assert!(Ellipse::from_cloud(&Matrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn area_matches_closed_form() {
        let cov = Matrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 2.0]);
        let e = Ellipse::new(Vector::zeros(2), cov.clone(), 0.0).unwrap();
        let q = 5.991;
        assert_relative_eq!(
            e.area(q),
            std::f64::consts::PI * q * cov.determinant().sqrt(),
            max_relative = 1e-12
        );
        let (axes, _) = e.axes(q);
        assert_relative_eq!(axes[0] * axes[1] * std::f64::consts::PI, e.area(q), max_relative = 1e-10);
    }

    #[test]
    fn membership_boundary() {
        let e = Ellipse::new(Vector::zeros(2), Matrix::identity(2, 2), 0.0).unwrap();
        let set = ConfidenceEllipseSet::new(vec![e], 0.05).unwrap();
        let r = set.quantile.sqrt();
        assert!(set.contains(0, &Vector::from_vec(vec![r * 0.999, 0.0])));
        assert!(!set.contains(0, &Vector::from_vec(vec![r * 1.001, 0.0])));
        assert_eq!(set.ellipses[0].eccentricity(), 0.0);
    }
}
