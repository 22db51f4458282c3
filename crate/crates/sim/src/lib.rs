//! Simulation test beds with known ground truth.
//!
//! * [`lowrank`]: noisy rank-`K` data with Haar factors, an SVD-based feature
//!   extractor that perturbs and permutes its output, and the end-to-end
//!   coverage experiment.
//! * [`pointprocess`]: 64x64x3 images of "cells" drawn from a marked
//!   log-Gaussian Cox process with Matérn covariance, each with the latent
//!   parameters that generated it and a scalar response.

pub mod lowrank;
pub mod matern;
pub mod pointprocess;

pub use lowrank::{
    generate_lowrank, run_lowrank_experiment, CoverageReport, LowRankConfig, LowRankDataset,
    SvdExtractor,
};
pub use matern::{matern_covariance, GaussianFieldSampler, MaternParams};
pub use pointprocess::{generate_dataset, sample_image, ImageSample, PointProcessDraw, SimulationConfig};
