//! Multi-channel raster images.

use crate::error::{Error, Result};

/// `height x width x channels` image, stored row-major with channels
/// innermost: index `(y * width + x) * channels + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::shape(
                format!("{} values", height * width * channels),
                format!("{} values", data.len()),
            ));
        }
        Ok(Self { height, width, channels, data })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn get_mut(&mut self, y: usize, x: usize, c: usize) -> &mut f64 {
        &mut self.data[(y * self.width + x) * self.channels + c]
    }

    /// Copies the `size x size` window with top-left corner `(y, x)`.
    pub fn crop(&self, y: usize, x: usize, size: usize) -> Result<Image> {
        if y + size > self.height || x + size > self.width {
            return Err(Error::invalid("crop", "window exceeds image bounds"));
        }
        let mut out = Image::zeros(size, size, self.channels);
        for dy in 0..size {
            for dx in 0..size {
                for c in 0..self.channels {
                    *out.get_mut(dy, dx, c) = self.get(y + dy, x + dx, c);
                }
            }
        }
        Ok(out)
    }

    pub fn dot(&self, other: &Image) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..*self
        }
    }

    pub fn channel_sum(&self, c: usize) -> f64 {
        self.data.iter().skip(c).step_by(self.channels).sum()
    }
}
