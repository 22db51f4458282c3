//! Marked log-Gaussian Cox process images.
//!
//! Per image: a baseline intensity `Λ = exp(f_Λ)` and class intensities
//! `B_r = exp(β_r + f_r)`, where `f_Λ` and the `f_r` are Matérn fields. A
//! fixed number `N` of cell locations is drawn with density proportional to
//! `Λ`; each cell gets class `r` with probability `B_r^τ / Σ_r' B_r'^τ` and
//! a `Gamma(5, rate λ_r)` radius, and is painted as a filled disc into
//! channel `r` of the raster.

use featboot_core::image::Image;
use featboot_core::linalg::Matrix;
use featboot_core::{Error, Result, SeededRng};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::matern::{resample_bilinear, GaussianFieldSampler, MaternParams};

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// Maps `[lo, hi]` onto `[0, 1]`.
    pub fn unit_scale(&self, v: f64) -> f64 {
        if self.hi > self.lo {
            (v - self.lo) / (self.hi - self.lo)
        } else {
            0.5
        }
    }

    fn sample(&self, rng: &mut SeededRng) -> f64 {
        if self.hi > self.lo {
            rng.random_range(self.lo..=self.hi)
        } else {
            self.lo
        }
    }
}

/// Sampling ranges for every generative parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamRanges {
    pub n_points: Range,
    pub nu_lambda: Range,
    pub alpha_lambda: Range,
    pub beta: Range,
    pub nu_b: Range,
    pub alpha_b: Range,
    pub tau: Range,
    pub lambda: Range,
}

impl Default for ParamRanges {
    fn default() -> Self {
        Self {
            n_points: Range::new(50.0, 1000.0),
            nu_lambda: Range::new(0.0, 8.0),
            alpha_lambda: Range::new(0.0, 8.0),
            beta: Range::new(-0.15, 0.15),
            nu_b: Range::new(0.0, 3.0),
            alpha_b: Range::new(0.0, 3.0),
            tau: Range::new(0.0, 3.0),
            lambda: Range::new(100.0, 500.0),
        }
    }
}

/// Response weights per parameter, applied to unit-scaled values.
pub mod influence {
    pub const N_POINTS: f64 = 0.5;
    pub const NU_LAMBDA: f64 = -0.5;
    pub const ALPHA_LAMBDA: f64 = -0.5;
    pub const BETA_FIRST: f64 = 1.0;
    pub const BETA_OTHER: f64 = -1.0;
    pub const NU_B: f64 = -0.5;
    pub const ALPHA_B: f64 = -0.5;
    pub const TAU: f64 = 0.5;
    pub const LAMBDA_FIRST: f64 = 1.0;
    pub const LAMBDA_OTHER: f64 = 0.0;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    /// `R`, one raster channel per class.
    pub classes: usize,
    /// Raster side length in pixels.
    pub raster: usize,
    /// Side length of the lattice the Gaussian fields are drawn on; fields
    /// are bilinearly resampled to the raster.
    pub field_grid: usize,
    /// Marginal variance of every Matérn field.
    pub field_variance: f64,
    /// Lower bound applied to sampled roughness and bandwidth values.
    pub min_smoothness: f64,
    /// Radii are drawn in unit-square units and multiplied by this factor.
    pub radius_scale: f64,
    pub ranges: ParamRanges,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            classes: 3,
            raster: 64,
            field_grid: 32,
            field_variance: 1.0,
            min_smoothness: 0.05,
            radius_scale: 1.0,
            ranges: ParamRanges::default(),
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 {
            return Err(Error::invalid("classes", "need at least one class"));
        }
        if self.raster == 0 || self.field_grid == 0 || self.field_grid > 128 {
            return Err(Error::invalid("field_grid", "need raster >= 1 and 1 <= field_grid <= 128"));
        }
        if !(self.field_variance > 0.0) || !(self.min_smoothness > 0.0) || !(self.radius_scale > 0.0) {
            return Err(Error::invalid("field_variance", "variance, smoothness floor and radius scale must be positive"));
        }
        let r = &self.ranges;
        for (name, range) in [
            ("ranges.n_points", r.n_points),
            ("ranges.nu_lambda", r.nu_lambda),
            ("ranges.alpha_lambda", r.alpha_lambda),
            ("ranges.beta", r.beta),
            ("ranges.nu_b", r.nu_b),
            ("ranges.alpha_b", r.alpha_b),
            ("ranges.tau", r.tau),
            ("ranges.lambda", r.lambda),
        ] {
            if !(range.lo <= range.hi) || !range.lo.is_finite() || !range.hi.is_finite() {
                return Err(Error::InvalidArgument { name, reason: format!("invalid range [{}, {}]", range.lo, range.hi) });
            }
        }
        if r.n_points.lo < 1.0 {
            return Err(Error::invalid("ranges.n_points", "need at least one point"));
        }
        if r.lambda.lo <= 0.0 {
            return Err(Error::invalid("ranges.lambda", "Gamma rates must be positive"));
        }
        if r.tau.lo < 0.0 {
            return Err(Error::invalid("ranges.tau", "temperature must be nonnegative"));
        }
        Ok(())
    }
}

/// The generative parameters of one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointProcessDraw {
    /// `N`
    pub n_points: usize,
    /// `ν_Λ`
    pub nu_lambda: f64,
    /// `α_Λ`
    pub alpha_lambda: f64,
    /// `β_r`, one per class.
    pub beta: Vec<f64>,
    /// `ν_B`
    pub nu_b: f64,
    /// `α_B`
    pub alpha_b: f64,
    /// `τ`
    pub tau: f64,
    /// `λ_r`, one per class.
    pub lambda: Vec<f64>,
}

impl PointProcessDraw {
    pub fn sample(cfg: &SimulationConfig, rng: &mut SeededRng) -> Self {
        let r = &cfg.ranges;
        let floor = |v: f64| v.max(cfg.min_smoothness);
        let n_points = if r.n_points.hi > r.n_points.lo {
            rng.random_range(r.n_points.lo.ceil() as usize..=r.n_points.hi.floor() as usize)
        } else {
            r.n_points.lo.round() as usize
        };
        Self {
            n_points,
            nu_lambda: floor(r.nu_lambda.sample(rng)),
            alpha_lambda: floor(r.alpha_lambda.sample(rng)),
            beta: (0..cfg.classes).map(|_| r.beta.sample(rng)).collect(),
            nu_b: floor(r.nu_b.sample(rng)),
            alpha_b: floor(r.alpha_b.sample(rng)),
            tau: r.tau.sample(rng),
            lambda: (0..cfg.classes).map(|_| r.lambda.sample(rng)).collect(),
        }
    }

    /// Checks every parameter against `ranges` (roughness and bandwidth
    /// against their floored lower bound).
    pub fn validate(&self, cfg: &SimulationConfig) -> Result<()> {
        let r = &cfg.ranges;
        let floored = |range: Range| Range::new(range.lo.max(cfg.min_smoothness), range.hi.max(cfg.min_smoothness));
        let mut checks = vec![
            ("n_points", self.n_points as f64, r.n_points),
            ("nu_lambda", self.nu_lambda, floored(r.nu_lambda)),
            ("alpha_lambda", self.alpha_lambda, floored(r.alpha_lambda)),
            ("nu_b", self.nu_b, floored(r.nu_b)),
            ("alpha_b", self.alpha_b, floored(r.alpha_b)),
            ("tau", self.tau, r.tau),
        ];
        if self.beta.len() != cfg.classes || self.lambda.len() != cfg.classes {
            return Err(Error::invalid("beta/lambda", format!("need one value per class ({})", cfg.classes)));
        }
        checks.extend(self.beta.iter().map(|&b| ("beta", b, r.beta)));
        checks.extend(self.lambda.iter().map(|&l| ("lambda", l, r.lambda)));
        for (name, v, range) in checks {
            if !range.contains(v) {
                return Err(Error::InvalidArgument {
                    name,
                    reason: format!("{v} outside [{}, {}]", range.lo, range.hi),
                });
            }
        }
        Ok(())
    }

    /// Linear combination of unit-scaled parameters with the influence
    /// weights. Scaling always uses the reference ranges, so the response is
    /// a fixed function of the parameters.
    pub fn response(&self) -> f64 {
        let r = ParamRanges::default();
        let mut y = influence::N_POINTS * r.n_points.unit_scale(self.n_points as f64)
            + influence::NU_LAMBDA * r.nu_lambda.unit_scale(self.nu_lambda)
            + influence::ALPHA_LAMBDA * r.alpha_lambda.unit_scale(self.alpha_lambda)
            + influence::NU_B * r.nu_b.unit_scale(self.nu_b)
            + influence::ALPHA_B * r.alpha_b.unit_scale(self.alpha_b)
            + influence::TAU * r.tau.unit_scale(self.tau);
        for (i, &b) in self.beta.iter().enumerate() {
            let w = if i == 0 { influence::BETA_FIRST } else { influence::BETA_OTHER };
            y += w * r.beta.unit_scale(b);
        }
        for (i, &l) in self.lambda.iter().enumerate() {
            let w = if i == 0 { influence::LAMBDA_FIRST } else { influence::LAMBDA_OTHER };
            y += w * r.lambda.unit_scale(l);
        }
        y
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    /// Position in the unit square; `x` runs along columns, `y` along rows.
    pub x: f64,
    pub y: f64,
    /// Zero-based class index.
    pub class: usize,
    /// Radius in unit-square units.
    pub radius: f64,
}

#[derive(Debug, Clone)]
pub struct ImageSample {
    pub image: Image,
    pub points: Vec<Cell>,
    /// `Λ` on the raster.
    pub intensity: Matrix,
    /// `B_r` on the raster.
    pub class_intensities: Vec<Matrix>,
    pub y: f64,
    pub params: PointProcessDraw,
}

/// `B_r^τ / Σ_r' B_r'^τ` from the log-intensities `log B_r`.
pub fn class_probabilities(log_b: &[f64], tau: f64) -> Vec<f64> {
    let scaled: Vec<f64> = log_b.iter().map(|l| tau * l).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = scaled.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

fn sample_categorical(probs: &[f64], rng: &mut SeededRng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

pub fn sample_image(params: &PointProcessDraw, cfg: &SimulationConfig, rng: &mut SeededRng) -> Result<ImageSample> {
    cfg.validate()?;
    params.validate(cfg)?;
    let size = cfg.raster;
    let lambda_field = GaussianFieldSampler::new(
        cfg.field_grid,
        &MaternParams::new(params.nu_lambda, params.alpha_lambda, cfg.field_variance)?,
    )?;
    let log_lambda = resample_bilinear(&lambda_field.sample(rng), size);
    let class_field = GaussianFieldSampler::new(
        cfg.field_grid,
        &MaternParams::new(params.nu_b, params.alpha_b, cfg.field_variance)?,
    )?;
    let log_b: Vec<Matrix> = params
        .beta
        .iter()
        .map(|&beta| resample_bilinear(&class_field.sample(rng), size).add_scalar(beta))
        .collect();

    // Location density ∝ Λ over raster cells.
    let max_log = log_lambda.max();
    let mut cdf = Vec::with_capacity(size * size);
    let mut acc = 0.0;
    for r in 0..size {
        for c in 0..size {
            acc += (log_lambda[(r, c)] - max_log).exp();
            cdf.push(acc);
        }
    }
    let radius_dist: Vec<Gamma<f64>> = params
        .lambda
        .iter()
        .map(|&l| Gamma::new(5.0, 1.0 / l).map_err(|e| Error::invalid("lambda", e.to_string())))
        .collect::<Result<_>>()?;

    let mut points = Vec::with_capacity(params.n_points);
    let mut log_b_here = vec![0.0; cfg.classes];
    for _ in 0..params.n_points {
        let u: f64 = rng.random::<f64>() * acc;
        let cell = cdf.partition_point(|&v| v <= u).min(size * size - 1);
        let (row, col) = (cell / size, cell % size);
        let x = (col as f64 + rng.random::<f64>()) / size as f64;
        let y = (row as f64 + rng.random::<f64>()) / size as f64;
        for (k, lb) in log_b.iter().enumerate() {
            log_b_here[k] = lb[(row, col)];
        }
        let class = sample_categorical(&class_probabilities(&log_b_here, params.tau), rng);
        let radius = radius_dist[class].sample(rng) * cfg.radius_scale;
        points.push(Cell { x, y, class, radius });
    }

    let mut image = Image::zeros(size, size, cfg.classes);
    for p in &points {
        paint_disc(&mut image, p);
    }
    Ok(ImageSample {
        image,
        points,
        intensity: log_lambda.map(f64::exp),
        class_intensities: log_b.into_iter().map(|m| m.map(f64::exp)).collect(),
        y: params.response(),
        params: params.clone(),
    })
}

/// Anti-aliased filled disc, saturating at 1. The pixel containing the
/// center always receives at least the disc's area fraction.
fn paint_disc(image: &mut Image, p: &Cell) {
    let size = image.width() as f64;
    let (cx, cy, r) = (p.x * size, p.y * size, p.radius * size);
    let lo_x = (cx - r - 1.0).floor().max(0.0) as usize;
    let hi_x = ((cx + r + 1.0).ceil() as usize).min(image.width() - 1);
    let lo_y = (cy - r - 1.0).floor().max(0.0) as usize;
    let hi_y = ((cy + r + 1.0).ceil() as usize).min(image.height() - 1);
    for py in lo_y..=hi_y {
        for px in lo_x..=hi_x {
            let d = ((px as f64 + 0.5 - cx).powi(2) + (py as f64 + 0.5 - cy).powi(2)).sqrt();
            let cover = (r + 0.5 - d).clamp(0.0, 1.0);
            if cover > 0.0 {
                let v = image.get_mut(py, px, p.class);
                *v = (*v + cover).min(1.0);
            }
        }
    }
    let (px, py) = ((cx as usize).min(image.width() - 1), (cy as usize).min(image.height() - 1));
    let v = image.get_mut(py, px, p.class);
    *v = v.max((std::f64::consts::PI * r * r).min(1.0));
}

/// Stream family for per-image randomness; image `i` uses stream `i`.
pub const IMAGE_STREAMS: &str = "pointprocess-image";

pub fn generate_image(index: usize, seed: u64, cfg: &SimulationConfig) -> Result<ImageSample> {
    let mut rng = SeededRng::labelled(seed, IMAGE_STREAMS, index as u64);
    let params = PointProcessDraw::sample(cfg, &mut rng);
    sample_image(&params, cfg, &mut rng)
}

pub fn generate_dataset(n_images: usize, seed: u64, cfg: &SimulationConfig) -> Result<Vec<ImageSample>> {
    if n_images == 0 {
        return Err(Error::invalid("n_images", "need at least one image"));
    }
    cfg.validate()?;
    (0..n_images)
        .into_par_iter()
        .map(|i| generate_image(i, seed, cfg))
        .collect()
}
