use featboot_core::image::Image;
use featboot_core::linalg::Matrix;
use featboot_core::{Error, Result, SeededRng};
use rayon::prelude::*;

/// One `s x s x c` kernel.
pub type Kernel = Image;

/// Draws `count` kernels: for each, a training image uniformly with
/// replacement, then a patch origin uniformly over the valid offsets.
///
/// Kernel values are rounded to `f32` so a saved bank reloads bit-exactly.
pub fn sample_patches(images: &[Image], count: usize, size: usize, rng: &mut SeededRng) -> Result<Vec<Kernel>> {
    if images.is_empty() {
        return Err(Error::Empty);
    }
    if count == 0 || size == 0 {
        return Err(Error::invalid("features", "need at least one kernel of size >= 1"));
    }
    let channels = images[0].channels();
    for img in images {
        if img.height() < size || img.width() < size {
            return Err(Error::invalid(
                "patch_size",
                format!("{size} exceeds image {}x{}", img.height(), img.width()),
            ));
        }
        if img.channels() != channels {
            return Err(Error::shape(format!("{channels} channels"), format!("{}", img.channels())));
        }
    }
    (0..count)
        .map(|_| {
            let img = &images[rng.index(images.len())];
            let y = rng.index(img.height() - size + 1);
            let x = rng.index(img.width() - size + 1);
            Ok(img.crop(y, x, size)?.map(|v| v as f32 as f64))
        })
        .collect()
}

/// Kernels flattened into the rows of an `L x (s s c)` matrix, with the
/// options that change how they act on an image.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBank {
    weights: Matrix,
    size: usize,
    channels: usize,
    rectify: bool,
}

impl KernelBank {
    /// With `center`, each kernel has its per-channel mean removed, so
    /// constant regions contribute nothing. With `rectify`, responses pass
    /// through `max(0, ·)` before averaging.
    pub fn new(kernels: &[Kernel], center: bool, rectify: bool) -> Result<Self> {
        let first = kernels.first().ok_or(Error::Empty)?;
        let (size, channels) = (first.height(), first.channels());
        let len = size * size * channels;
        let mut weights = Matrix::zeros(kernels.len(), len);
        for (l, k) in kernels.iter().enumerate() {
            if k.shape() != (size, size, channels) {
                return Err(Error::shape(format!("{size}x{size}x{channels}"), format!("{:?}", k.shape())));
            }
            if k.data().iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite);
            }
            for (j, v) in k.data().iter().enumerate() {
                weights[(l, j)] = *v;
            }
            if center {
                for c in 0..channels {
                    let mean = (0..size * size).map(|p| weights[(l, p * channels + c)]).sum::<f64>()
                        / (size * size) as f64;
                    for p in 0..size * size {
                        weights[(l, p * channels + c)] -= mean;
                    }
                }
            }
        }
        Ok(Self { weights, size, channels, rectify })
    }

    pub fn len(&self) -> usize {
        self.weights.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn patch_size(&self) -> usize {
        self.size
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn rectify(&self) -> bool {
        self.rectify
    }

    /// Row `l` as an image-shaped kernel (after any centering).
    pub fn kernel(&self, l: usize) -> Kernel {
        Image::from_vec(self.size, self.size, self.channels, self.weights.row(l).iter().copied().collect())
            .expect("row length matches kernel shape")
    }

    fn check(&self, image: &Image) -> Result<()> {
        if image.channels() != self.channels {
            return Err(Error::shape(format!("{} channels", self.channels), format!("{}", image.channels())));
        }
        if image.height() < self.size || image.width() < self.size {
            return Err(Error::shape(
                format!("at least {0}x{0}", self.size),
                format!("{}x{}", image.height(), image.width()),
            ));
        }
        Ok(())
    }
}

/// `z_l`: mean over valid offsets of `<w_l, patch>`.
pub fn extract_features(bank: &KernelBank, image: &Image) -> Result<Vec<f64>> {
    bank.check(image)?;
    if bank.rectify {
        Ok(rectified(bank, image))
    } else {
        Ok(linear(bank, image))
    }
}

// Without a nonlinearity the mean of the responses equals the kernel dotted
// with the mean patch, and each mean-patch entry is a box sum read off an
// integral image.
fn linear(bank: &KernelBank, image: &Image) -> Vec<f64> {
    let (h, w, c) = image.shape();
    let s = bank.size;
    let (oh, ow) = (h - s + 1, w - s + 1);
    let stride = w + 1;
    let mut integral = vec![0.0; (h + 1) * stride * c];
    for ch in 0..c {
        let base = ch * (h + 1) * stride;
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += image.get(y, x, ch);
                integral[base + (y + 1) * stride + x + 1] = integral[base + y * stride + x + 1] + row;
            }
        }
    }
    let count = (oh * ow) as f64;
    let mut mean_patch = Vec::with_capacity(s * s * c);
    for dy in 0..s {
        for dx in 0..s {
            for ch in 0..c {
                let at = |y: usize, x: usize| integral[ch * (h + 1) * stride + y * stride + x];
                let sum = at(dy + oh, dx + ow) - at(dy, dx + ow) - at(dy + oh, dx) + at(dy, dx);
                mean_patch.push(sum / count);
            }
        }
    }
    bank.weights.row_iter().map(|r| r.iter().zip(&mean_patch).map(|(a, b)| a * b).sum()).collect()
}

// Patches as rows of an im2col matrix, so all responses come from one
// matrix product.
fn rectified(bank: &KernelBank, image: &Image) -> Vec<f64> {
    let (h, w, c) = image.shape();
    let s = bank.size;
    let (oh, ow) = (h - s + 1, w - s + 1);
    let row_len = s * c;
    let mut cols = Matrix::zeros(s * s * c, oh * ow);
    for oy in 0..oh {
        for ox in 0..ow {
            let mut col = cols.column_mut(oy * ow + ox);
            for dy in 0..s {
                let start = ((oy + dy) * w + ox) * c;
                col.rows_mut(dy * row_len, row_len)
                    .copy_from_slice(&image.data()[start..start + row_len]);
            }
        }
    }
    let responses = &bank.weights * cols;
    let count = (oh * ow) as f64;
    responses.row_iter().map(|r| r.iter().map(|v| v.max(0.0)).sum::<f64>() / count).collect()
}

/// Features of many images as the rows of an `n x L` matrix.
pub fn feature_matrix(bank: &KernelBank, images: &[Image]) -> Result<Matrix> {
    let rows: Vec<Vec<f64>> = images.par_iter().map(|img| extract_features(bank, img)).collect::<Result<_>>()?;
    Ok(Matrix::from_fn(rows.len(), bank.len(), |i, j| rows[i][j]))
}
