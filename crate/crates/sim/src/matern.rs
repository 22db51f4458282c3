//! Matérn covariance and Gaussian random fields on a regular grid.

use faer::{Mat, Side};
use featboot_core::linalg::Matrix;
use featboot_core::{Error, Result, SeededRng};
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaternParams {
    /// Roughness `ν`.
    pub nu: f64,
    /// Bandwidth `α`.
    pub alpha: f64,
    /// Marginal variance `σ²`.
    pub sigma2: f64,
}

impl MaternParams {
    pub fn new(nu: f64, alpha: f64, sigma2: f64) -> Result<Self> {
        for (name, v) in [("nu", nu), ("alpha", alpha), ("sigma2", sigma2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be positive and finite, got {v}")));
            }
        }
        Ok(Self { nu, alpha, sigma2 })
    }
}

/// `σ² 2^{1−ν}/Γ(ν) (√(2ν) d/α)^ν K_ν(√(2ν) d/α)`, with the `d → 0` limit
/// `σ²`.
pub fn matern_covariance(d: f64, p: &MaternParams) -> f64 {
    let x = (2.0 * p.nu).sqrt() * d / p.alpha;
    if x < 1e-12 {
        return p.sigma2;
    }
    // K_ν(x) < e^{-x} sqrt(π/2x)(1 + ...) underflows long before this.
    if x > 700.0 {
        return 0.0;
    }
    let (_, k_nu, _, _) = puruspe::besselik(p.nu, x);
    let log_corr = (1.0 - p.nu) * std::f64::consts::LN_2 - puruspe::ln_gamma(p.nu)
        + p.nu * x.ln()
        + k_nu.ln();
    p.sigma2 * log_corr.exp().min(1.0)
}

pub const JITTER_START: f64 = 1e-8;
pub const JITTER_MAX: f64 = 1e-4;

/// Cholesky factor of the Matérn covariance between the centers of a
/// `grid x grid` lattice over the unit square. Draw as many fields from it
/// as needed.
pub struct GaussianFieldSampler {
    grid: usize,
    factor: Mat<f64>,
    jitter: f64,
}

impl GaussianFieldSampler {
    pub fn new(grid: usize, p: &MaternParams) -> Result<Self> {
        if grid == 0 || grid > 128 {
            return Err(Error::invalid("grid", format!("must lie in 1..=128, got {grid}")));
        }
        let n = grid * grid;
        let h = 1.0 / grid as f64;
        // Stationarity: covariance depends only on the lattice offset.
        let table: Vec<f64> = (0..n)
            .map(|o| {
                let (dy, dx) = ((o / grid) as f64, (o % grid) as f64);
                matern_covariance(h * (dx * dx + dy * dy).sqrt(), p)
            })
            .collect();
        let cov = Mat::<f64>::from_fn(n, n, |i, j| {
            let dy = (i / grid).abs_diff(j / grid);
            let dx = (i % grid).abs_diff(j % grid);
            table[dy * grid + dx]
        });

        let mut jitter = JITTER_START;
        loop {
            let mut a = cov.clone();
            for i in 0..n {
                a[(i, i)] += jitter * p.sigma2;
            }
            if let Ok(llt) = a.llt(Side::Lower) {
                return Ok(Self {
                    grid,
                    factor: llt.L().to_owned(),
                    jitter,
                });
            }
            jitter *= 2.0;
            if jitter > JITTER_MAX {
                return Err(Error::Factorization(format!(
                    "Matérn covariance not positive definite with jitter up to {JITTER_MAX} (nu={}, alpha={})",
                    p.nu, p.alpha
                )));
            }
        }
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    /// Relative diagonal loading that made the factorization succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// One zero-mean field, indexed `[(row, col)]` with rows along `y`.
    pub fn sample(&self, rng: &mut SeededRng) -> Matrix {
        let n = self.grid * self.grid;
        let z = Mat::<f64>::from_fn(n, 1, |_, _| StandardNormal.sample(rng));
        let f = &self.factor * &z;
        Matrix::from_fn(self.grid, self.grid, |r, c| f[(r * self.grid + c, 0)])
    }
}

pub fn sample_gaussian_field(grid: usize, p: &MaternParams, rng: &mut SeededRng) -> Result<Matrix> {
    Ok(GaussianFieldSampler::new(grid, p)?.sample(rng))
}

/// Bilinear resampling between cell-centered lattices over the unit square.
pub fn resample_bilinear(field: &Matrix, size: usize) -> Matrix {
    let src = field.nrows();
    if src == size {
        return field.clone();
    }
    let coord = |i: usize| {
        let t = (i as f64 + 0.5) * src as f64 / size as f64 - 0.5;
        let t = t.clamp(0.0, (src - 1) as f64);
        let lo = (t.floor() as usize).min(src.saturating_sub(2));
        let hi = (lo + 1).min(src - 1);
        (lo, hi, t - lo as f64)
    };
    Matrix::from_fn(size, size, |r, c| {
        let (r0, r1, fr) = coord(r);
        let (c0, c1, fc) = coord(c);
        let top = field[(r0, c0)] * (1.0 - fc) + field[(r0, c1)] * fc;
        let bottom = field[(r1, c0)] * (1.0 - fc) + field[(r1, c1)] * fc;
        top * (1.0 - fr) + bottom * fr
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_distance_is_variance() {
        let p = MaternParams::new(2.3, 0.4, 1.7).unwrap();
        assert_eq!(matern_covariance(0.0, &p), 1.7);
        assert_relative_eq!(matern_covariance(1e-9, &p), 1.7, max_relative = 1e-6);
    }

    #[test]
    fn half_integer_closed_forms() {
        let half = MaternParams::new(0.5, 0.3, 2.0).unwrap();
        let three_halves = MaternParams::new(1.5, 0.3, 2.0).unwrap();
        for i in 1..200 {
            let d = i as f64 * 0.01;
            assert!((matern_covariance(d, &half) - 2.0 * (-d / 0.3).exp()).abs() < 1e-10);
            let s = 3f64.sqrt() * d / 0.3;
            assert!((matern_covariance(d, &three_halves) - 2.0 * (1.0 + s) * (-s).exp()).abs() < 1e-10);
        }
    }

    #[test]
    fn decreasing_in_distance() {
        let p = MaternParams::new(8.0, 0.05, 1.0).unwrap();
        let mut prev = f64::INFINITY;
        for i in 0..100 {
            let c = matern_covariance(i as f64 * 0.015, &p);
            assert!(c <= prev && c >= 0.0);
            prev = c;
        }
    }

    #[test]
    fn invalid_params() {
        assert!(MaternParams::new(0.0, 1.0, 1.0).is_err());
        assert!(MaternParams::new(1.0, -1.0, 1.0).is_err());
        assert!(MaternParams::new(1.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn extreme_smoothness_factorizes() {
        for (nu, alpha) in [(8.0, 8.0), (0.05, 0.05), (3.0, 3.0), (8.0, 0.05)] {
            let p = MaternParams::new(nu, alpha, 1.0).unwrap();
            let s = GaussianFieldSampler::new(16, &p).unwrap();
            assert!(s.jitter() <= JITTER_MAX);
            let f = s.sample(&mut SeededRng::new(0, 0));
            assert!(f.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn tiny_variance_gives_flat_field() {
        let p = MaternParams::new(1.0, 0.2, 1e-12).unwrap();
        let f = sample_gaussian_field(8, &p, &mut SeededRng::new(1, 0)).unwrap();
        assert!(f.amax() < 1e-4);
    }

    #[test]
    fn bilinear_identity_and_constants() {
        let f = Matrix::from_fn(4, 4, |r, c| (r * 4 + c) as f64);
        assert_eq!(resample_bilinear(&f, 4), f);
        let g = resample_bilinear(&Matrix::from_element(3, 3, 2.5), 7);
        assert!(g.iter().all(|v| (*v - 2.5).abs() < 1e-12));
        // Linear ramps stay linear in the interior.
        let ramp = Matrix::from_fn(4, 4, |_, c| c as f64);
        let up = resample_bilinear(&ramp, 8);
        assert!((up[(0, 3)] - up[(0, 2)] - 0.5).abs() < 1e-12);
    }
}
