//! Random convolutional features: `L` kernels cut from random training
//! images, each convolved with an input image and spatially averaged, then
//! fed to a ridge regression.

pub mod features;
pub mod model;
pub mod ridge;

pub use features::{extract_features, feature_matrix, sample_patches, Kernel, KernelBank};
pub use model::{RcfConfig, RcfModel};
pub use ridge::{cross_validate, fit_ridge, RidgeFit};
