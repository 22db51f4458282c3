//! Dense linear-algebra primitives shared by every stage of the pipeline.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Rank-`K` truncation of a singular value decomposition, `X ≈ U diag(S) Vᵀ`.
///
/// Singular values are sorted non-increasing. Column signs are fixed so that
/// the entry of largest magnitude in each column of `V` is nonnegative (the
/// first such entry when magnitudes tie), which makes the factorization a
/// deterministic function of `X`.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub u: Matrix,
    pub s: Vector,
    pub v: Matrix,
}

impl TruncatedSvd {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn reconstruct(&self) -> Matrix {
        &self.u * Matrix::from_diagonal(&self.s) * self.v.transpose()
    }
}

pub fn check_finite(x: &Matrix) -> Result<()> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::Empty);
    }
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

fn check_rank(x: &Matrix, k: usize) -> Result<()> {
    if k == 0 || k > x.nrows().min(x.ncols()) {
        return Err(Error::RankOutOfRange {
            rank: k,
            rows: x.nrows(),
            cols: x.ncols(),
        });
    }
    Ok(())
}

pub fn truncated_svd(x: &Matrix, k: usize) -> Result<TruncatedSvd> {
    check_finite(x)?;
    check_rank(x, k)?;

    let svd = x.clone().svd(true, true);
    let (Some(u_full), Some(vt_full)) = (svd.u, svd.v_t) else {
        return Err(Error::Factorization("SVD did not return singular vectors".into()));
    };
    let s_full = svd.singular_values;

    let mut order: Vec<usize> = (0..s_full.len()).collect();
    // Stable sort keeps the decomposition's own order among exact ties.
    order.sort_by(|&a, &b| s_full[b].total_cmp(&s_full[a]));

    let n = x.nrows();
    let l = x.ncols();
    let mut u = Matrix::zeros(n, k);
    let mut v = Matrix::zeros(l, k);
    let mut s = Vector::zeros(k);
    for (dst, &src) in order.iter().take(k).enumerate() {
        s[dst] = s_full[src].max(0.0);
        u.set_column(dst, &u_full.column(src));
        v.set_column(dst, &vt_full.row(src).transpose());
        fix_sign(&mut u, &mut v, dst);
    }
    Ok(TruncatedSvd { u, s, v })
}

fn fix_sign(u: &mut Matrix, v: &mut Matrix, col: usize) {
    let mut best = 0;
    let mut best_abs = f64::NEG_INFINITY;
    for (j, val) in v.column(col).iter().enumerate() {
        if val.abs() > best_abs {
            best_abs = val.abs();
            best = j;
        }
    }
    if v[(best, col)] < 0.0 {
        v.column_mut(col).neg_mut();
        u.column_mut(col).neg_mut();
    }
}

/// Subtracts column means. Returns the centered matrix and the means.
pub fn column_center(x: &Matrix) -> Result<(Matrix, Vector)> {
    check_finite(x)?;
    let n = x.nrows() as f64;
    let mean = Vector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n));
    let mut centered = x.clone();
    for (mut col, m) in centered.column_iter_mut().zip(mean.iter()) {
        col.add_scalar_mut(-m);
    }
    Ok((centered, mean))
}

/// Rows of `Û_K diag(Ŝ_K)`: the position of each sample in the top-`K`
/// principal subspace. The caller is responsible for centering `z`.
pub fn principal_coordinates(z: &Matrix, k: usize) -> Result<Matrix> {
    let svd = truncated_svd(z, k)?;
    Ok(svd.u * Matrix::from_diagonal(&svd.s))
}

/// A Haar-distributed `n x k` matrix with orthonormal columns, from the QR
/// factorization of a standard Gaussian matrix with the diagonal of `R`
/// forced positive.
pub fn sample_haar_orthonormal(n: usize, k: usize, rng: &mut SeededRng) -> Result<Matrix> {
    if k == 0 || k > n {
        return Err(Error::invalid("k", format!("need 1 <= k <= n, got k={k}, n={n}")));
    }
    let g = standard_normal_matrix(n, k, rng);
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(q)
}

/// Fills row by row so the draw order does not depend on storage layout.
pub fn standard_normal_matrix(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    Matrix::from_row_slice(rows, cols, &data)
}

/// Uniform random permutation of `0..k` (Fisher–Yates).
pub fn random_permutation(k: usize, rng: &mut SeededRng) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..k).collect();
    for i in (1..k).rev() {
        let j = rng.index(i + 1);
        perm.swap(i, j);
    }
    perm
}

/// `Π` with `(ZΠ)[:, j] = Z[:, perm[j]]`.
pub fn permutation_matrix(perm: &[usize]) -> Matrix {
    let k = perm.len();
    let mut p = Matrix::zeros(k, k);
    for (j, &src) in perm.iter().enumerate() {
        p[(src, j)] = 1.0;
    }
    p
}

/// Equivalent to `z * permutation_matrix(perm)` without the multiply.
pub fn permute_columns(z: &Matrix, perm: &[usize]) -> Matrix {
    Matrix::from_fn(z.nrows(), perm.len(), |i, j| z[(i, perm[j])])
}

pub fn select_rows(z: &Matrix, rows: &[usize]) -> Matrix {
    Matrix::from_fn(rows.len(), z.ncols(), |i, j| z[(rows[i], j)])
}

pub fn frobenius_sq(x: &Matrix) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Largest absolute deviation of `QᵀQ` from the identity.
pub fn orthonormality_error(q: &Matrix) -> f64 {
    let g = q.transpose() * q;
    let k = g.nrows();
    (&g - Matrix::identity(k, k)).amax()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identity_singular_values() {
        let svd = truncated_svd(&Matrix::identity(3, 3), 3).unwrap();
        for s in svd.s.iter() {
            assert_relative_eq!(*s, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn diagonal_case_sign_fixed() {
        let x = Matrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 0.0]);
        let svd = truncated_svd(&x, 1).unwrap();
        assert_relative_eq!(svd.s[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(svd.v[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(svd.u[(0, 0)], 1.0, epsilon = 1e-12);
        assert!(svd.v[(1, 0)].abs() < 1e-12);
    }

    #[test]
    fn sign_convention_negated_input() {
        let x = Matrix::from_row_slice(2, 2, &[-3.0, 0.0, 0.0, 1.0]);
        let svd = truncated_svd(&x, 2).unwrap();
        // V columns point at their largest entry, so U absorbs the sign.
        assert!(svd.v[(0, 0)] > 0.0);
        assert!(svd.u[(0, 0)] < 0.0);
        assert!(svd.v[(1, 1)] > 0.0);
    }

    #[test]
    fn rank_errors() {
        let x = Matrix::identity(3, 2);
        assert!(matches!(truncated_svd(&x, 0), Err(Error::RankOutOfRange { .. })));
        assert!(matches!(truncated_svd(&x, 3), Err(Error::RankOutOfRange { .. })));
        let mut y = x.clone();
        y[(0, 0)] = f64::NAN;
        assert!(matches!(truncated_svd(&y, 1), Err(Error::NonFinite)));
    }

    #[test]
    fn centering_examples() {
        let (c, m) = column_center(&Matrix::from_row_slice(2, 1, &[1.0, 3.0])).unwrap();
        assert_eq!(m[0], 2.0);
        assert_eq!(c.as_slice(), &[-1.0, 1.0]);

        let x = Matrix::from_row_slice(3, 2, &[1.0, 5.0, 2.0, 5.0, 3.0, 5.0]);
        let (c, m) = column_center(&x).unwrap();
        assert_eq!(m[1], 5.0);
        assert!(c.column(1).iter().all(|v| *v == 0.0));

        let (c2, _) = column_center(&c).unwrap();
        assert!((&c2 - &c).amax() < 1e-12);
    }

    #[test]
    fn principal_coordinates_lossless_at_full_rank() {
        let mut rng = SeededRng::new(11, 0);
        let u = sample_haar_orthonormal(6, 2, &mut rng).unwrap();
        let v = sample_haar_orthonormal(4, 2, &mut rng).unwrap();
        let z = &u * Matrix::from_diagonal(&Vector::from_vec(vec![5.0, 2.0])) * v.transpose();
        let svd = truncated_svd(&z, 2).unwrap();
        let coords = principal_coordinates(&z, 2).unwrap();
        assert!((coords * svd.v.transpose() - &z).amax() < 1e-8);
        // Known factors: coordinate column norms recover the singular values.
        let coords = principal_coordinates(&z, 2).unwrap();
        assert_relative_eq!(coords.column(0).norm(), 5.0, epsilon = 1e-10);
        assert_relative_eq!(coords.column(1).norm(), 2.0, epsilon = 1e-10);
    }

    #[test]
    fn rank_one_coordinates() {
        let mut rng = SeededRng::new(12, 0);
        let u = sample_haar_orthonormal(5, 1, &mut rng).unwrap();
        let v = sample_haar_orthonormal(3, 1, &mut rng).unwrap();
        let z = &u * 4.0 * v.transpose();
        let coords = principal_coordinates(&z, 1).unwrap();
        let sign = (coords[(0, 0)] / u[(0, 0)]).signum();
        assert!((coords - &u * (4.0 * sign)).amax() < 1e-10);
    }

    #[test]
    fn haar_one_by_one() {
        for s in 0..20 {
            let q = sample_haar_orthonormal(1, 1, &mut SeededRng::new(s, 0)).unwrap();
            assert_eq!(q[(0, 0)].abs(), 1.0);
        }
        assert!(sample_haar_orthonormal(2, 3, &mut SeededRng::new(0, 0)).is_err());
    }

    #[test]
    fn haar_orthonormal_all_draws() {
        for s in 0..1000 {
            let q = sample_haar_orthonormal(7, 3, &mut SeededRng::new(s, 5)).unwrap();
            assert!(orthonormality_error(&q) < 1e-10);
        }
    }

    #[test]
    fn haar_projector_expectation() {
        // E[Q Qᵀ] = (K/n) I for Haar Q. Each entry of Q Qᵀ is bounded by 1,
        // so its standard error is at most 1/sqrt(draws).
        let (n, k, draws) = (4, 2, 10_000);
        let mut acc = Matrix::zeros(n, n);
        let mut acc_sq = Matrix::zeros(n, n);
        for s in 0..draws {
            let q = sample_haar_orthonormal(n, k, &mut SeededRng::new(s, 0)).unwrap();
            let p = &q * q.transpose();
            acc += &p;
            acc_sq += p.component_mul(&p);
        }
        let d = draws as f64;
        let mean = acc / d;
        for i in 0..n {
            for j in 0..n {
                let var = acc_sq[(i, j)] / d - mean[(i, j)].powi(2);
                let se = (var / d).sqrt();
                let target = if i == j { k as f64 / n as f64 } else { 0.0 };
                assert!((mean[(i, j)] - target).abs() < 3.0 * se + 1e-12, "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn permutation_uniform() {
        assert_eq!(random_permutation(1, &mut SeededRng::new(0, 0)), vec![0]);
        let mut rng = SeededRng::new(99, 0);
        let mut counts = std::collections::HashMap::new();
        let draws = 60_000;
        for _ in 0..draws {
            *counts.entry(random_permutation(3, &mut rng)).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 6);
        for c in counts.values() {
            assert!((*c as f64 / draws as f64 - 1.0 / 6.0).abs() < 0.01);
        }
    }

    #[test]
    fn permutation_deterministic() {
        let a: Vec<_> = {
            let mut r = SeededRng::new(4, 4);
            (0..10).map(|_| random_permutation(5, &mut r)).collect()
        };
        let b: Vec<_> = {
            let mut r = SeededRng::new(4, 4);
            (0..10).map(|_| random_permutation(5, &mut r)).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn permutation_matrix_matches_permute_columns() {
        let z = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let perm = [2, 0, 1];
        assert_eq!(&z * permutation_matrix(&perm), permute_columns(&z, &perm));
        assert_eq!(permute_columns(&z, &perm)[(0, 0)], 3.0);
    }
}
