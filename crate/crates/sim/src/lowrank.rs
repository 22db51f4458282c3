//! Low-rank latent model with an SVD-based stand-in for a retrained feature
//! extractor, and the coverage experiment built on it.
//!
//! Data: `X = U Σ Vᵀ + E` with `U ~ Haar(n, K)`, `V ~ Haar(D, K)`,
//! `Σ = c I_K` and `E_ij ~ N(0, σ_E²)`; response `y = U Σ β + ε` with
//! `β = (b 1_{K/2}, −b 1_{K/2})`.
//!
//! Extractor: `Z = (Û_K̂ Σ̂_K̂ + Ẽ) Π` with fresh Gaussian noise `Ẽ` and a
//! fresh column permutation `Π` on every call.

use std::time::{Duration, Instant};

use featboot_core::bootstrap::{
    align, align_truth, compromise_replicates, confidence_ellipses, coverage,
    nonparametric_replicates, parametric_replicates, BootstrapConfig, Method,
};
use featboot_core::ellipse::ConfidenceEllipseSet;
use featboot_core::linalg::{
    permute_columns, random_permutation, sample_haar_orthonormal, standard_normal_matrix,
    truncated_svd, Matrix, Vector,
};
use featboot_core::procrustes::{DEFAULT_MAX_CYCLES, DEFAULT_TOL};
use featboot_core::{Error, Result, SeededRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LowRankConfig {
    /// `n`
    pub samples: usize,
    /// `D`
    pub dim: usize,
    /// `c`
    pub singular_value: f64,
    /// `b`
    pub response_coef: f64,
    /// `K`
    pub rank: usize,
    /// `σ_E²`
    pub noise_var: f64,
    /// `σ_y`
    pub response_sd: f64,
    /// Standard deviation of the extractor's perturbation `Ẽ`.
    pub extractor_noise_sd: f64,
    /// `K̂`, the number of principal coordinates the extractor emits.
    pub extractor_rank: usize,
    pub seed: u64,
}

impl Default for LowRankConfig {
    fn default() -> Self {
        Self {
            samples: 1000,
            dim: 100,
            singular_value: 100.0,
            response_coef: 1.0,
            rank: 2,
            noise_var: 0.1,
            response_sd: 0.1,
            extractor_noise_sd: 0.1,
            extractor_rank: 10,
            seed: 0,
        }
    }
}

impl LowRankConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 || !self.rank.is_multiple_of(2) {
            return Err(Error::invalid("rank", format!("K must be even and positive, got {}", self.rank)));
        }
        if self.rank > self.samples.min(self.dim) {
            return Err(Error::invalid(
                "rank",
                format!("K={} exceeds min(n, D)={}", self.rank, self.samples.min(self.dim)),
            ));
        }
        if self.extractor_rank == 0 || self.extractor_rank > self.samples.min(self.dim) {
            return Err(Error::invalid(
                "extractor_rank",
                format!("K̂={} must lie in 1..=min(n, D)={}", self.extractor_rank, self.samples.min(self.dim)),
            ));
        }
        for (name, v) in [
            ("noise_var", self.noise_var),
            ("response_sd", self.response_sd),
            ("extractor_noise_sd", self.extractor_noise_sd),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        if !self.singular_value.is_finite() || !self.response_coef.is_finite() {
            return Err(Error::invalid("singular_value", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LowRankDataset {
    pub x: Matrix,
    pub y: Vector,
    pub u: Matrix,
    pub v: Matrix,
    pub sigma: Vector,
    pub beta: Vector,
}

impl LowRankDataset {
    /// The latent coordinates `U Σ`.
    pub fn truth(&self) -> Matrix {
        &self.u * Matrix::from_diagonal(&self.sigma)
    }
}

pub fn generate_lowrank(cfg: &LowRankConfig, rng: &mut SeededRng) -> Result<LowRankDataset> {
    cfg.validate()?;
    let (n, d, k) = (cfg.samples, cfg.dim, cfg.rank);
    let u = sample_haar_orthonormal(n, k, rng)?;
    let v = sample_haar_orthonormal(d, k, rng)?;
    let sigma = Vector::from_element(k, cfg.singular_value);
    let beta = Vector::from_fn(k, |i, _| if i < k / 2 { cfg.response_coef } else { -cfg.response_coef });
    let signal = &u * Matrix::from_diagonal(&sigma);
    let noise = standard_normal_matrix(n, d, rng) * cfg.noise_var.sqrt();
    let x = &signal * v.transpose() + noise;
    let eps = standard_normal_matrix(n, 1, rng).column(0) * cfg.response_sd;
    let y = &signal * &beta + eps;
    Ok(LowRankDataset { x, y, u, v, sigma, beta })
}

/// Caches `Û_K̂ Σ̂_K̂` of `X`; every call to [`SvdExtractor::extract`]
/// perturbs and permutes it afresh.
#[derive(Debug, Clone)]
pub struct SvdExtractor {
    coords: Matrix,
}

impl SvdExtractor {
    pub fn new(x: &Matrix, rank: usize) -> Result<Self> {
        let svd = truncated_svd(x, rank)?;
        Ok(Self {
            coords: svd.u * Matrix::from_diagonal(&svd.s),
        })
    }

    pub fn rank(&self) -> usize {
        self.coords.ncols()
    }

    /// The unperturbed `Û_K̂ Σ̂_K̂`.
    pub fn coords(&self) -> &Matrix {
        &self.coords
    }

    pub fn extract(&self, noise_sd: f64, rng: &mut SeededRng) -> Matrix {
        let (n, k) = self.coords.shape();
        let noisy = &self.coords + standard_normal_matrix(n, k, rng) * noise_sd;
        let perm = random_permutation(k, rng);
        permute_columns(&noisy, &perm)
    }
}

pub fn svd_extractor(x: &Matrix, rank: usize, noise_sd: f64, rng: &mut SeededRng) -> Result<Matrix> {
    Ok(SvdExtractor::new(x, rank)?.extract(noise_sd, rng))
}

/// Stream families used by the experiment.
pub const DATA_STREAMS: &str = "lowrank-data";
pub const EXTRACTOR_STREAMS: &str = "lowrank-extractor";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub method: Method,
    pub n: usize,
    #[serde(rename = "B")]
    pub replicates: usize,
    #[serde(rename = "S")]
    pub extractors: usize,
    pub alpha: f64,
    pub coverage: f64,
    pub mean_area: f64,
    pub seed: u64,
    /// Wall-clock time; excluded from serialized reports so they stay
    /// reproducible byte for byte.
    #[serde(skip)]
    pub runtime: Duration,
}

/// Everything produced by one experiment run.
#[derive(Debug, Clone)]
pub struct LowRankExperiment {
    pub report: CoverageReport,
    pub dataset: LowRankDataset,
    pub ellipses: ConfidenceEllipseSet,
    /// `U Σ` rotated onto the ellipse centers.
    pub aligned_truth: Matrix,
}

/// Number of extractor runs each method consumes.
pub fn extractor_runs(boot: &BootstrapConfig) -> usize {
    match boot.method {
        Method::Nonparametric => boot.replicates,
        Method::Parametric => 1,
        Method::Compromise => boot.extractors,
    }
}

pub fn run_lowrank_experiment(cfg: &LowRankConfig, boot: &BootstrapConfig) -> Result<CoverageReport> {
    run_lowrank_experiment_full(cfg, boot).map(|e| e.report)
}

pub fn run_lowrank_experiment_full(cfg: &LowRankConfig, boot: &BootstrapConfig) -> Result<LowRankExperiment> {
    let start = Instant::now();
    cfg.validate()?;
    boot.validate()?;
    let mut data_rng = SeededRng::labelled(cfg.seed, DATA_STREAMS, 0);
    let dataset = generate_lowrank(cfg, &mut data_rng)?;
    let extractor = SvdExtractor::new(&dataset.x, cfg.extractor_rank)?;

    let features: Vec<Matrix> = (0..extractor_runs(boot))
        .into_par_iter()
        .map(|s| {
            let mut rng = SeededRng::labelled(boot.seed, EXTRACTOR_STREAMS, s as u64);
            extractor.extract(cfg.extractor_noise_sd, &mut rng)
        })
        .collect();

    let reps = match boot.method {
        Method::Nonparametric => nonparametric_replicates(&features, boot.rank)?,
        Method::Parametric => parametric_replicates(&features[0], boot)?,
        Method::Compromise => compromise_replicates(&features, boot)?,
    };
    drop(features);
    let reps = align(reps, DEFAULT_TOL, DEFAULT_MAX_CYCLES)?;
    let ellipses = confidence_ellipses(&reps, boot.alpha)?;
    let truth = dataset.truth();
    let cov = coverage(&ellipses, &truth)?;
    let aligned_truth = align_truth(&ellipses, &truth)?;

    let report = CoverageReport {
        method: boot.method,
        n: cfg.samples,
        replicates: boot.replicates,
        extractors: extractor_runs(boot),
        alpha: boot.alpha,
        coverage: cov,
        mean_area: ellipses.mean_area(),
        seed: boot.seed,
        runtime: start.elapsed(),
    };
    Ok(LowRankExperiment {
        report,
        dataset,
        ellipses,
        aligned_truth,
    })
}
