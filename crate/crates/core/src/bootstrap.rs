//! Bootstrap replicates of low-dimensional projections of learned features.
//!
//! Three ways to produce `B` replicate coordinate matrices for the inference
//! samples:
//!
//! * **nonparametric**: one retrained extractor per replicate; each feature
//!   matrix is reduced to its own principal coordinates.
//! * **parametric**: a single feature matrix; replicates are its rank-`K`
//!   coordinates plus residuals resampled from the rank-`K` fit, with the
//!   coordinate axes randomly permuted.
//! * **compromise**: `S < B` extractors, each fitted as in the parametric
//!   case; each replicate picks one of them at random and adds residuals
//!   pooled across all `S`.
//!
//! Replicates are then aligned by generalized Procrustes analysis and
//! summarized as per-sample confidence ellipses.
//!
//! Randomness: replicate `b` draws only from stream `b` of the configured
//! seed, so the replicate loop is order independent.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ellipse::{ConfidenceEllipseSet, Ellipse};
use crate::error::{Error, Result};
use crate::linalg::{
    column_center, permute_columns, principal_coordinates, random_permutation, select_rows,
    truncated_svd, Matrix, Vector,
};
use crate::procrustes::{generalized_procrustes, orthogonal_procrustes, GpaResult};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Nonparametric,
    Parametric,
    Compromise,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Parametric, Method::Nonparametric, Method::Compromise];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Nonparametric => "nonparametric",
            Method::Parametric => "parametric",
            Method::Compromise => "compromise",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nonparametric" => Ok(Method::Nonparametric),
            "parametric" => Ok(Method::Parametric),
            "compromise" => Ok(Method::Compromise),
            other => Err(Error::invalid(
                "method",
                format!("expected nonparametric, parametric or compromise, got `{other}`"),
            )),
        }
    }
}

/// Where the parametric bootstrap gets its rank-`K` basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParametricBasis {
    /// Refit on a row-resampled copy of `Z` for every replicate.
    #[default]
    Resampled,
    /// Fit once on `Z` itself; only residuals and permutations vary.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BootstrapConfig {
    pub method: Method,
    /// `B`
    pub replicates: usize,
    /// `S`, compromise only.
    pub extractors: usize,
    /// `K`
    pub rank: usize,
    pub alpha: f64,
    pub seed: u64,
    pub parametric_basis: ParametricBasis,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            method: Method::Parametric,
            replicates: 1000,
            extractors: 100,
            rank: 2,
            alpha: 0.05,
            seed: 0,
            parametric_basis: ParametricBasis::Resampled,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::invalid("B", format!("need B >= 2, got {}", self.replicates)));
        }
        if self.method == Method::Compromise
            && !(1..self.replicates).contains(&self.extractors)
        {
            return Err(Error::invalid(
                "S",
                format!("compromise needs 1 <= S < B, got S={} B={}", self.extractors, self.replicates),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid("alpha", format!("need 0 < alpha < 1, got {}", self.alpha)));
        }
        if self.rank == 0 {
            return Err(Error::invalid("K", "rank must be at least 1"));
        }
        Ok(())
    }
}

/// Learning/inference partition of `0..n`, both sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub learn_indices: Vec<usize>,
    pub infer_indices: Vec<usize>,
    pub learn_fraction: f64,
}

pub fn split(n: usize, learn_fraction: f64, rng: &mut SeededRng) -> Result<SplitSpec> {
    if !(learn_fraction > 0.0 && learn_fraction < 1.0) {
        return Err(Error::invalid(
            "learn_fraction",
            format!("must lie in (0, 1), got {learn_fraction}"),
        ));
    }
    if n < 4 {
        return Err(Error::TooFew { what: "samples to split", min: 4, got: n });
    }
    let n_learn = (learn_fraction * n as f64).round() as usize;
    let perm = random_permutation(n, rng);
    let mut learn = perm[..n_learn].to_vec();
    let mut infer = perm[n_learn..].to_vec();
    learn.sort_unstable();
    infer.sort_unstable();
    Ok(SplitSpec {
        learn_indices: learn,
        infer_indices: infer,
        learn_fraction,
    })
}

#[derive(Debug, Clone)]
pub struct Alignment {
    pub gpa: GpaResult,
    /// `X_b R_b` for every replicate.
    pub coords: Vec<Matrix>,
}

/// `B` coordinate matrices (`n_inf x K`) and, once aligned, their rotations
/// and consensus.
#[derive(Debug, Clone)]
pub struct ReplicateSet {
    pub coords: Vec<Matrix>,
    pub alignment: Option<Alignment>,
}

impl ReplicateSet {
    pub fn new(coords: Vec<Matrix>) -> Result<Self> {
        let first = coords.first().ok_or(Error::Empty)?;
        let shape = first.shape();
        if let Some(bad) = coords.iter().find(|c| c.shape() != shape) {
            return Err(Error::shape(
                format!("{}x{}", shape.0, shape.1),
                format!("{}x{}", bad.nrows(), bad.ncols()),
            ));
        }
        Ok(Self { coords, alignment: None })
    }

    pub fn replicates(&self) -> usize {
        self.coords.len()
    }

    pub fn samples(&self) -> usize {
        self.coords[0].nrows()
    }

    pub fn rank(&self) -> usize {
        self.coords[0].ncols()
    }

    pub fn is_aligned(&self) -> bool {
        self.alignment.is_some()
    }

    pub fn consensus(&self) -> Option<&Matrix> {
        self.alignment.as_ref().map(|a| &a.gpa.consensus)
    }

    pub fn aligned_coords(&self) -> Option<&[Matrix]> {
        self.alignment.as_ref().map(|a| a.coords.as_slice())
    }
}

fn common_rows(sets: &[Matrix]) -> Result<usize> {
    let n = sets.first().ok_or(Error::Empty)?.nrows();
    for z in sets {
        if z.nrows() != n {
            return Err(Error::shape(format!("{n} rows"), format!("{} rows", z.nrows())));
        }
    }
    Ok(n)
}

/// Principal coordinates of each (independently extracted) feature matrix.
pub fn nonparametric_replicates(feature_sets: &[Matrix], rank: usize) -> Result<ReplicateSet> {
    common_rows(feature_sets)?;
    let coords = feature_sets
        .par_iter()
        .map(|z| {
            let (zc, _) = column_center(z)?;
            principal_coordinates(&zc, rank)
        })
        .collect::<Result<Vec<_>>>()?;
    ReplicateSet::new(coords)
}

/// Rank-`K` coordinates of every inference row together with the residual
/// pool of the fit they came from. The pool is sorted, so draws from it do
/// not depend on the order of the feature columns.
#[derive(Debug, Clone)]
struct ResidualModel {
    coords: Matrix,
    residuals: Vec<f64>,
}

/// Fits the rank-`K` basis on `zc` (or a row resample of it), then projects
/// all rows of `zc` so that row identity survives the resampling.
fn fit_residual_model(zc: &Matrix, rank: usize, resample: Option<&mut SeededRng>) -> Result<ResidualModel> {
    let fit_on = match resample {
        Some(rng) => {
            let n = zc.nrows();
            let rows: Vec<usize> = (0..n).map(|_| rng.index(n)).collect();
            column_center(&select_rows(zc, &rows))?.0
        }
        None => zc.clone(),
    };
    let svd = truncated_svd(&fit_on, rank)?;
    let residual = &fit_on - &fit_on * &svd.v * svd.v.transpose();
    let mut residuals = residual.as_slice().to_vec();
    residuals.sort_unstable_by(f64::total_cmp);
    Ok(ResidualModel {
        coords: zc * &svd.v,
        residuals,
    })
}

/// `(coords + E_b) Π_b`, column-centered. `E_b` draws i.i.d. from the pool.
fn draw_replicate(coords: &Matrix, pool: &[f64], rng: &mut SeededRng) -> Matrix {
    let k = coords.ncols();
    let noisy = coords + draw_residuals(coords.nrows(), k, pool, rng);
    let perm = random_permutation(k, rng);
    let permuted = permute_columns(&noisy, &perm);
    // Centering cannot fail on finite input.
    column_center(&permuted).map(|(c, _)| c).unwrap_or(permuted)
}

/// `n x k` entries drawn uniformly with replacement from `pool`, row by row.
fn draw_residuals(n: usize, k: usize, pool: &[f64], rng: &mut SeededRng) -> Matrix {
    let data: Vec<f64> = (0..n * k).map(|_| pool[rng.index(pool.len())]).collect();
    Matrix::from_row_slice(n, k, &data)
}

fn check_parametric_input(z: &Matrix, rank: usize) -> Result<()> {
    if rank == 0 || rank > z.nrows().min(z.ncols()) {
        return Err(Error::RankOutOfRange { rank, rows: z.nrows(), cols: z.ncols() });
    }
    let distinct = (1..z.nrows()).any(|i| z.row(i) != z.row(0));
    if !distinct {
        return Err(Error::TooFew { what: "distinct rows", min: 2, got: 1 });
    }
    Ok(())
}

pub fn parametric_replicates(z: &Matrix, cfg: &BootstrapConfig) -> Result<ReplicateSet> {
    cfg.validate()?;
    check_parametric_input(z, cfg.rank)?;
    let (zc, _) = column_center(z)?;
    let fixed = match cfg.parametric_basis {
        ParametricBasis::Fixed => Some(fit_residual_model(&zc, cfg.rank, None)?),
        ParametricBasis::Resampled => None,
    };
    let coords = (0..cfg.replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = SeededRng::new(cfg.seed, b as u64);
            let model = match &fixed {
                Some(m) => m.clone(),
                None => fit_residual_model(&zc, cfg.rank, Some(&mut rng))?,
            };
            Ok(draw_replicate(&model.coords, &model.residuals, &mut rng))
        })
        .collect::<Result<Vec<_>>>()?;
    ReplicateSet::new(coords)
}

/// Label of the stream family used to resample rows for each compromise
/// extractor; extractor `s` uses stream `s`.
pub const COMPROMISE_BASIS_STREAMS: &str = "compromise-basis";

pub fn compromise_replicates(feature_sets: &[Matrix], cfg: &BootstrapConfig) -> Result<ReplicateSet> {
    if feature_sets.is_empty() {
        return Err(Error::TooFew { what: "extractors", min: 1, got: 0 });
    }
    if cfg.replicates < 2 {
        return Err(Error::invalid("B", format!("need B >= 2, got {}", cfg.replicates)));
    }
    common_rows(feature_sets)?;
    let models = feature_sets
        .par_iter()
        .enumerate()
        .map(|(s, z)| {
            check_parametric_input(z, cfg.rank)?;
            let (zc, _) = column_center(z)?;
            let mut rng = SeededRng::labelled(cfg.seed, COMPROMISE_BASIS_STREAMS, s as u64);
            fit_residual_model(&zc, cfg.rank, Some(&mut rng))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut pool: Vec<f64> = models.iter().flat_map(|m| m.residuals.iter().copied()).collect();
    pool.sort_unstable_by(f64::total_cmp);
    let coords = (0..cfg.replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = SeededRng::new(cfg.seed, b as u64);
            let s = rng.index(models.len());
            draw_replicate(&models[s].coords, &pool, &mut rng)
        })
        .collect();
    ReplicateSet::new(coords)
}

/// Dispatches on `cfg.method`. Nonparametric uses every feature set as one
/// replicate; parametric requires exactly one; compromise uses all as the
/// `S` extractors.
pub fn replicates(feature_sets: &[Matrix], cfg: &BootstrapConfig) -> Result<ReplicateSet> {
    match cfg.method {
        Method::Nonparametric => {
            if feature_sets.len() < 2 {
                return Err(Error::TooFew {
                    what: "feature matrices for the nonparametric bootstrap",
                    min: 2,
                    got: feature_sets.len(),
                });
            }
            nonparametric_replicates(feature_sets, cfg.rank)
        }
        Method::Parametric => match feature_sets {
            [z] => parametric_replicates(z, cfg),
            _ => Err(Error::invalid(
                "inputs",
                format!("parametric bootstrap takes exactly one feature matrix, got {}", feature_sets.len()),
            )),
        },
        Method::Compromise => compromise_replicates(feature_sets, cfg),
    }
}

pub fn align(reps: ReplicateSet, tol: f64, max_cycles: usize) -> Result<ReplicateSet> {
    let gpa = generalized_procrustes(&reps.coords, tol, max_cycles)?;
    let coords = gpa.aligned(&reps.coords);
    Ok(ReplicateSet {
        coords: reps.coords,
        alignment: Some(Alignment { gpa, coords }),
    })
}

pub fn confidence_ellipses(reps: &ReplicateSet, alpha: f64) -> Result<ConfidenceEllipseSet> {
    let aligned = reps.aligned_coords().ok_or(Error::NotAligned)?;
    let b = aligned.len();
    if b < 2 {
        return Err(Error::TooFew { what: "replicates", min: 2, got: b });
    }
    let k = reps.rank();
    let ellipses = (0..reps.samples())
        .into_par_iter()
        .map(|i| {
            let cloud = Matrix::from_fn(b, k, |r, j| aligned[r][(i, j)]);
            Ellipse::from_cloud(&cloud)
        })
        .collect::<Result<Vec<_>>>()?;
    ConfidenceEllipseSet::new(ellipses, alpha)
}

/// Centers `truth` and rotates it onto the ellipse centers.
pub fn align_truth(ellipses: &ConfidenceEllipseSet, truth: &Matrix) -> Result<Matrix> {
    let centers = ellipses.centers();
    if truth.shape() != centers.shape() {
        return Err(Error::shape(
            format!("{}x{}", centers.nrows(), centers.ncols()),
            format!("{}x{}", truth.nrows(), truth.ncols()),
        ));
    }
    let (tc, _) = column_center(truth)?;
    let r = orthogonal_procrustes(&centers, &tc)?;
    Ok(r.apply(&tc))
}

/// Fraction of samples whose Procrustes-aligned true coordinates fall inside
/// their confidence ellipse.
pub fn coverage(ellipses: &ConfidenceEllipseSet, truth: &Matrix) -> Result<f64> {
    let aligned = align_truth(ellipses, truth)?;
    let hits = (0..ellipses.len())
        .filter(|&i| ellipses.contains(i, &Vector::from_iterator(aligned.ncols(), aligned.row(i).iter().copied())))
        .count();
    Ok(hits as f64 / ellipses.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_pool_gives_constant_residuals() {
        let e = draw_residuals(4, 3, &[0.25; 17], &mut SeededRng::new(1, 0));
        assert!(e.iter().all(|v| *v == 0.25));
    }

    #[test]
    fn split_sizes_and_partition() {
        let s = split(10, 0.5, &mut SeededRng::new(0, 0)).unwrap();
        assert_eq!(s.learn_indices.len(), 5);
        let mut all: Vec<usize> = s.learn_indices.iter().chain(&s.infer_indices).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());

        let s = split(1000, 0.9, &mut SeededRng::new(0, 0)).unwrap();
        assert_eq!(s.learn_indices.len(), 900);
        assert_eq!(s, split(1000, 0.9, &mut SeededRng::new(0, 0)).unwrap());
        assert_ne!(s, split(1000, 0.9, &mut SeededRng::new(1, 0)).unwrap());

        assert!(split(10, 0.0, &mut SeededRng::new(0, 0)).is_err());
        assert!(split(10, 1.0, &mut SeededRng::new(0, 0)).is_err());
        assert!(split(3, 0.5, &mut SeededRng::new(0, 0)).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = BootstrapConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.replicates = 1;
        assert!(cfg.validate().is_err());
        cfg.replicates = 10;
        cfg.method = Method::Compromise;
        cfg.extractors = 10;
        assert!(cfg.validate().is_err());
        cfg.extractors = 3;
        assert!(cfg.validate().is_ok());
        cfg.alpha = 1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn method_parsing() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("bayes".parse::<Method>().is_err());
    }

    #[test]
    fn parametric_rejects_degenerate_input() {
        let z = Matrix::from_element(5, 3, 1.0);
        let cfg = BootstrapConfig { replicates: 4, ..Default::default() };
        assert!(matches!(parametric_replicates(&z, &cfg), Err(Error::TooFew { .. })));
        let cfg = BootstrapConfig { replicates: 4, rank: 4, ..Default::default() };
        let z = Matrix::from_fn(5, 3, |i, j| (i * j) as f64);
        assert!(matches!(parametric_replicates(&z, &cfg), Err(Error::RankOutOfRange { .. })));
    }
}
