//! In-memory RGB image with floating-point samples on the 8-bit scale.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub const CHANNELS: usize = 3;

/// Row-major, channel-interleaved RGB image. Samples are nominally in
/// `[0, 255]` but intermediate estimates are not clamped.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn zeros(height: usize, width: usize) -> Self {
        Image {
            height,
            width,
            data: vec![0.0; height * width * CHANNELS],
        }
    }

    /// Builds an image from interleaved `[r, g, b, r, g, b, ...]` samples.
    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * CHANNELS {
            return Err(Error::Dimension(format!(
                "expected {} samples for a {height}x{width} RGB image, got {}",
                height * width * CHANNELS,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite sample at pixel ({}, {}) channel {}",
                i / CHANNELS / width,
                i / CHANNELS % width,
                i % CHANNELS
            )));
        }
        Ok(Image {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * CHANNELS);
        for row in 0..height {
            for col in 0..width {
                for ch in 0..CHANNELS {
                    data.push(f(row, col, ch));
                }
            }
        }
        Image {
            height,
            width,
            data,
        }
    }

    /// Converts 8-bit interleaved RGB bytes.
    pub fn from_rgb8(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        Self::from_vec(height, width, bytes.iter().map(|&b| f64::from(b)).collect())
    }

    /// Clamps to `[0, 255]` and rounds half up.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize(v)).collect()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.data[(row * self.width + col) * CHANNELS + ch]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, value: f64) {
        self.data[(row * self.width + col) * CHANNELS + ch] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width
    }

    /// Splits into three row-major planes.
    pub(crate) fn planes(&self) -> [Vec<f64>; CHANNELS] {
        let n = self.height * self.width;
        let mut planes = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for (i, px) in self.data.chunks_exact(CHANNELS).enumerate() {
            for ch in 0..CHANNELS {
                planes[ch][i] = px[ch];
            }
        }
        planes
    }
}

/// 8-bit quantization used when writing files: clamp, then round half up.
pub fn quantize(v: f64) -> u8 {
    let clamped = v.clamp(0.0, 255.0);
    let floor = clamped as u32 as f64;
    let rounded = if clamped - floor >= 0.5 {
        floor + 1.0
    } else {
        floor
    };
    rounded.min(255.0) as u8
}
