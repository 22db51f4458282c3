//! Bootstrap confidence regions for low-dimensional projections of
//! algorithmically learned features.
//!
//! The pipeline is: learned feature matrices for an inference set are
//! reduced to `K`-dimensional principal coordinates, replicated by one of
//! three bootstrap strategies, aligned with generalized Procrustes analysis,
//! and summarized as per-sample confidence ellipses.
//!
//! ```no_run
//! use featboot_core::bootstrap::{self, BootstrapConfig, Method};
//! # let feature_sets: Vec<featboot_core::Matrix> = vec![];
//! let reps = bootstrap::nonparametric_replicates(&feature_sets, 2).unwrap();
//! let aligned = bootstrap::align(reps, 1e-9, 100).unwrap();
//! let ellipses = bootstrap::confidence_ellipses(&aligned, 0.05).unwrap();
//! ```

pub mod bootstrap;
pub mod ellipse;
pub mod error;
pub mod image;
pub mod io;
pub mod linalg;
pub mod procrustes;
pub mod rng;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use rng::SeededRng;
