use std::path::Path;

use featboot_core::image::Image;
use featboot_core::io::{read_tensor, write_json, write_tensor};
use featboot_core::linalg::{Matrix, Vector};
use featboot_core::{Error, Result, SeededRng};
use serde::{Deserialize, Serialize};

use crate::features::{feature_matrix, extract_features, sample_patches, Kernel, KernelBank};
use crate::ridge::{cross_validate, RidgeFit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RcfConfig {
    /// `L`
    pub features: usize,
    /// `s`
    pub patch_size: usize,
    /// Remove each kernel's per-channel mean. Off by default: without a
    /// nonlinearity a centered kernel only sees border effects of the mean
    /// patch, so the features carry almost no signal.
    pub center_kernels: bool,
    /// Apply `max(0, ·)` to responses before averaging.
    pub rectify: bool,
    /// Candidate ridge penalties.
    pub lambdas: Vec<f64>,
    pub folds: usize,
}

impl Default for RcfConfig {
    fn default() -> Self {
        Self {
            features: 512,
            patch_size: 8,
            center_kernels: false,
            rectify: false,
            lambdas: (-3..=3).map(|e| 10f64.powi(e)).collect(),
            folds: 5,
        }
    }
}

impl RcfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.features == 0 || self.patch_size == 0 {
            return Err(Error::invalid("features", "need at least one kernel of size >= 1"));
        }
        if self.lambdas.is_empty() || self.lambdas.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::invalid("lambdas", "need a non-empty list of positive penalties"));
        }
        if self.folds < 2 {
            return Err(Error::invalid("folds", "need at least two folds"));
        }
        Ok(())
    }
}

/// On-disk manifest; kernels live in a sibling tensor file stacked along
/// the height axis.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    config: RcfConfig,
    channels: usize,
    patches_file: String,
    ridge: Option<RidgeFit>,
    cv_errors: Vec<f64>,
}

const PATCHES_FILE: &str = "patches.f32";
const MANIFEST_FILE: &str = "model.json";

#[derive(Debug, Clone)]
pub struct RcfModel {
    config: RcfConfig,
    patches: Vec<Kernel>,
    bank: KernelBank,
    ridge: Option<RidgeFit>,
    cv_errors: Vec<f64>,
}

impl RcfModel {
    /// Samples kernels from `train` without fitting the head.
    pub fn sample(config: &RcfConfig, train: &[Image], rng: &mut SeededRng) -> Result<Self> {
        config.validate()?;
        let patches = sample_patches(train, config.features, config.patch_size, rng)?;
        Self::from_patches(config.clone(), patches)
    }

    pub fn from_patches(config: RcfConfig, patches: Vec<Kernel>) -> Result<Self> {
        let bank = KernelBank::new(&patches, config.center_kernels, config.rectify)?;
        Ok(Self { config, patches, bank, ridge: None, cv_errors: Vec::new() })
    }

    /// Samples kernels, then fits the ridge head with `λ` picked by CV.
    pub fn train(config: &RcfConfig, train: &[Image], y: &[f64], rng: &mut SeededRng) -> Result<Self> {
        if train.len() != y.len() {
            return Err(Error::shape(format!("{} responses", train.len()), format!("{}", y.len())));
        }
        let mut model = Self::sample(config, train, rng)?;
        let z = model.features(train)?;
        model.fit(&z, &Vector::from_column_slice(y))?;
        Ok(model)
    }

    pub fn fit(&mut self, z: &Matrix, y: &Vector) -> Result<()> {
        let (fit, curve) = cross_validate(z, y, &self.config.lambdas, self.config.folds)?;
        self.ridge = Some(fit);
        self.cv_errors = curve;
        Ok(())
    }

    pub fn config(&self) -> &RcfConfig {
        &self.config
    }

    pub fn patches(&self) -> &[Kernel] {
        &self.patches
    }

    pub fn bank(&self) -> &KernelBank {
        &self.bank
    }

    pub fn ridge(&self) -> Option<&RidgeFit> {
        self.ridge.as_ref()
    }

    pub fn cv_errors(&self) -> &[f64] {
        &self.cv_errors
    }

    pub fn extract(&self, image: &Image) -> Result<Vec<f64>> {
        extract_features(&self.bank, image)
    }

    pub fn features(&self, images: &[Image]) -> Result<Matrix> {
        feature_matrix(&self.bank, images)
    }

    pub fn predict(&self, image: &Image) -> Result<f64> {
        let ridge = self
            .ridge
            .as_ref()
            .ok_or_else(|| Error::invalid("model", "ridge head has not been fitted"))?;
        Ok(ridge.predict(&self.extract(image)?))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let s = self.config.patch_size;
        let c = self.bank.channels();
        let mut stacked = Image::zeros(self.patches.len() * s, s, c);
        for (l, k) in self.patches.iter().enumerate() {
            for y in 0..s {
                for x in 0..s {
                    for ch in 0..c {
                        *stacked.get_mut(l * s + y, x, ch) = k.get(y, x, ch);
                    }
                }
            }
        }
        write_tensor(&dir.join(PATCHES_FILE), &stacked)?;
        let manifest = Manifest {
            config: self.config.clone(),
            channels: c,
            patches_file: PATCHES_FILE.into(),
            ridge: self.ridge.clone(),
            cv_errors: self.cv_errors.clone(),
        };
        write_json(&dir.join(MANIFEST_FILE), &manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        manifest.config.validate()?;
        let stacked = read_tensor(&dir.join(&manifest.patches_file))?;
        let s = manifest.config.patch_size;
        let l = manifest.config.features;
        if stacked.shape() != (l * s, s, manifest.channels) {
            return Err(Error::shape(
                format!("{}x{}x{}", l * s, s, manifest.channels),
                format!("{:?}", stacked.shape()),
            ));
        }
        let patches = (0..l).map(|k| stacked.crop(k * s, 0, s)).collect::<Result<Vec<_>>>()?;
        let mut model = Self::from_patches(manifest.config, patches)?;
        if let Some(r) = &manifest.ridge {
            if r.coef.len() != l {
                return Err(Error::shape(format!("{l} coefficients"), format!("{}", r.coef.len())));
            }
        }
        model.ridge = manifest.ridge;
        model.cv_errors = manifest.cv_errors;
        Ok(model)
    }
}
