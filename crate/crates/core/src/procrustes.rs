//! Orthogonal Procrustes and generalized Procrustes alignment.
//!
//! Rotations here range over the full orthogonal group, reflections
//! included. Translation and scaling are not estimated; inputs are expected
//! to be column-centered.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{check_finite, frobenius_sq, truncated_svd, Matrix};

/// A `K x K` orthogonal matrix acting on coordinates from the right.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalMap(Matrix);

impl OrthogonalMap {
    pub fn identity(k: usize) -> Self {
        Self(Matrix::identity(k, k))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    /// `x R`
    pub fn apply(&self, x: &Matrix) -> Matrix {
        x * &self.0
    }
}

/// The orthogonal `R` minimizing `‖X − Y R‖_F`.
///
/// With `YᵀX = U S Vᵀ` the minimizer is `R = U Vᵀ`. When `YᵀX` has repeated
/// singular values the minimizer is not unique; the deterministic SVD sign
/// convention selects one.
pub fn orthogonal_procrustes(x: &Matrix, y: &Matrix) -> Result<OrthogonalMap> {
    if x.shape() != y.shape() {
        return Err(Error::shape(
            format!("{}x{}", x.nrows(), x.ncols()),
            format!("{}x{}", y.nrows(), y.ncols()),
        ));
    }
    check_finite(x)?;
    check_finite(y)?;
    let k = x.ncols();
    let cross = y.transpose() * x;
    let svd = truncated_svd(&cross, k)?;
    Ok(OrthogonalMap(svd.u * svd.v.transpose()))
}

pub fn procrustes_objective(x: &Matrix, y: &Matrix, r: &OrthogonalMap) -> f64 {
    frobenius_sq(&(x - r.apply(y)))
}

#[derive(Debug, Clone)]
pub struct GpaResult {
    pub rotations: Vec<OrthogonalMap>,
    /// `M = (1/B) Σ_b X_b R_b`
    pub consensus: Matrix,
    /// `Σ_b ‖X_b R_b − M‖²_F` after each completed cycle.
    pub objective_trace: Vec<f64>,
    pub cycles: usize,
}

impl GpaResult {
    pub fn objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(0.0)
    }

    pub fn aligned(&self, xs: &[Matrix]) -> Vec<Matrix> {
        xs.iter()
            .zip(&self.rotations)
            .map(|(x, r)| r.apply(x))
            .collect()
    }
}

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_CYCLES: usize = 100;

/// Sum of squared deviations of each matrix from the mean of all of them.
pub fn gpa_objective(aligned: &[Matrix]) -> f64 {
    let m = mean_matrix(aligned);
    aligned.iter().map(|a| frobenius_sq(&(a - &m))).sum()
}

fn mean_matrix(xs: &[Matrix]) -> Matrix {
    let mut m = Matrix::zeros(xs[0].nrows(), xs[0].ncols());
    for x in xs {
        m += x;
    }
    m / xs.len() as f64
}

/// Cyclic generalized Procrustes analysis.
///
/// Starts from `M = X_1`. Each cycle rotates every `X_b` onto the current
/// mean, then recomputes the mean. Stops when the relative objective decrease
/// over a cycle falls below `tol` or after `max_cycles`. A cycle that would
/// increase the objective (possible only through round-off at the optimum) is
/// discarded, so `objective_trace` is non-increasing.
pub fn generalized_procrustes(xs: &[Matrix], tol: f64, max_cycles: usize) -> Result<GpaResult> {
    if xs.len() < 2 {
        return Err(Error::TooFew {
            what: "matrices for generalized Procrustes",
            min: 2,
            got: xs.len(),
        });
    }
    let shape = xs[0].shape();
    for x in xs {
        if x.shape() != shape {
            return Err(Error::shape(
                format!("{}x{}", shape.0, shape.1),
                format!("{}x{}", x.nrows(), x.ncols()),
            ));
        }
        check_finite(x)?;
    }
    if !(tol >= 0.0) || max_cycles == 0 {
        return Err(Error::invalid("tol/max_cycles", "need tol >= 0 and max_cycles >= 1"));
    }

    let k = shape.1;
    let mut rotations: Vec<OrthogonalMap> = vec![OrthogonalMap::identity(k); xs.len()];
    let mut consensus = xs[0].clone();
    let mut trace: Vec<f64> = Vec::new();
    let mut cycles = 0;

    while cycles < max_cycles {
        let new_rot: Vec<OrthogonalMap> = xs
            .par_iter()
            .map(|x| orthogonal_procrustes(&consensus, x))
            .collect::<Result<_>>()?;
        let aligned: Vec<Matrix> = xs.iter().zip(&new_rot).map(|(x, r)| r.apply(x)).collect();
        let new_consensus = mean_matrix(&aligned);
        let objective: f64 = aligned
            .iter()
            .map(|a| frobenius_sq(&(a - &new_consensus)))
            .sum();
        cycles += 1;

        match trace.last().copied() {
            Some(prev) if objective > prev => break,
            Some(prev) => {
                rotations = new_rot;
                consensus = new_consensus;
                trace.push(objective);
                let scale = prev.abs().max(f64::MIN_POSITIVE);
                if (prev - objective) / scale < tol {
                    break;
                }
            }
            None => {
                rotations = new_rot;
                consensus = new_consensus;
                trace.push(objective);
                if objective == 0.0 {
                    break;
                }
            }
        }
    }

    Ok(GpaResult {
        rotations,
        consensus,
        objective_trace: trace,
        cycles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{column_center, sample_haar_orthonormal, standard_normal_matrix};
    use crate::rng::SeededRng;

    fn random_centered(n: usize, k: usize, rng: &mut SeededRng) -> Matrix {
        column_center(&standard_normal_matrix(n, k, rng)).unwrap().0
    }

    #[test]
    fn identity_when_equal() {
        let mut rng = SeededRng::new(1, 0);
        let x = random_centered(10, 3, &mut rng);
        let r = orthogonal_procrustes(&x, &x).unwrap();
        assert!((r.matrix() - Matrix::identity(3, 3)).amax() < 1e-10);
    }

    #[test]
    fn exact_recovery() {
        let mut rng = SeededRng::new(2, 0);
        let y = random_centered(12, 3, &mut rng);
        let r0 = sample_haar_orthonormal(3, 3, &mut rng).unwrap();
        let x = &y * &r0;
        let r = orthogonal_procrustes(&x, &y).unwrap();
        assert!((r.matrix() - &r0).norm() < 1e-8);
    }

    #[test]
    fn reflection_recovered() {
        let mut rng = SeededRng::new(3, 0);
        let y = random_centered(8, 2, &mut rng);
        let flip = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let r = orthogonal_procrustes(&(&y * &flip), &y).unwrap();
        assert!((r.matrix() - flip).amax() < 1e-10);
    }

    #[test]
    fn shape_mismatch() {
        let a = Matrix::zeros(3, 2);
        let b = Matrix::zeros(4, 2);
        assert!(matches!(orthogonal_procrustes(&a, &b), Err(Error::ShapeMismatch { .. })));
        assert!(generalized_procrustes(&[a.clone(), b], 1e-9, 10).is_err());
        assert!(matches!(
            generalized_procrustes(&[a], 1e-9, 10),
            Err(Error::TooFew { .. })
        ));
    }

    #[test]
    fn gpa_identical_inputs() {
        let mut rng = SeededRng::new(4, 0);
        let x = random_centered(6, 2, &mut rng);
        let res = generalized_procrustes(&vec![x.clone(); 4], 1e-9, 100).unwrap();
        assert_eq!(res.cycles, 1);
        assert!(res.objective() < 1e-20);
        for r in &res.rotations {
            assert!((r.matrix() - Matrix::identity(2, 2)).amax() < 1e-10);
        }
    }

    #[test]
    fn gpa_exact_recovery() {
        let mut rng = SeededRng::new(5, 0);
        let x = random_centered(20, 3, &mut rng);
        let xs: Vec<Matrix> = (0..6)
            .map(|_| &x * sample_haar_orthonormal(3, 3, &mut rng).unwrap().transpose())
            .collect();
        let res = generalized_procrustes(&xs, 1e-9, 100).unwrap();
        assert!(res.objective() < 1e-12, "objective {}", res.objective());
    }

    #[test]
    fn gpa_beats_no_rotation_baseline() {
        let mut rng = SeededRng::new(6, 0);
        let xs: Vec<Matrix> = (0..3).map(|_| random_centered(5, 2, &mut rng)).collect();
        let res = generalized_procrustes(&xs, 1e-9, 100).unwrap();
        assert!(res.objective() <= gpa_objective(&xs));
        for w in res.objective_trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
        let again = generalized_procrustes(&res.aligned(&xs), 1e-9, 100).unwrap();
        assert!((again.objective() - res.objective()).abs() <= 1e-9 * res.objective().max(1.0));
    }

    #[test]
    fn consensus_is_mean_of_aligned() {
        let mut rng = SeededRng::new(7, 0);
        let xs: Vec<Matrix> = (0..5).map(|_| random_centered(9, 2, &mut rng)).collect();
        let res = generalized_procrustes(&xs, 1e-9, 100).unwrap();
        let m = mean_matrix(&res.aligned(&xs));
        assert!((m - &res.consensus).amax() < 1e-10);
    }
}
