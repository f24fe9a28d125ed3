//! PSNR and single-scale SSIM on the 8-bit intensity scale.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::image::{Image, CHANNELS};
use crate::math;

const PEAK: f64 = 255.0;
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = (0.01 * PEAK) * (0.01 * PEAK);
const SSIM_C2: f64 = (0.03 * PEAK) * (0.03 * PEAK);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityReport {
    /// `f64::INFINITY` for identical images.
    pub psnr_db: f64,
    pub ssim: f64,
}

impl QualityReport {
    pub fn compare(a: &Image, b: &Image) -> Result<Self> {
        Ok(QualityReport {
            psnr_db: psnr(a, b)?,
            ssim: ssim(a, b)?,
        })
    }
}

fn check_same(a: &Image, b: &Image) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "images differ in size: {}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )))
    }
}

/// `10 log10(255² / MSE)` over all pixels and channels.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    check_same(a, b)?;
    let n = a.as_slice().len();
    let sse: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    if sse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * math::log10(PEAK * PEAK / (sse / n as f64)))
}

fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mut taps = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - c;
        *t = math::exp(-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA));
    }
    let s: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= s);
    taps
}

/// Separable Gaussian filter keeping only windows fully inside the plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w + 1 - SSIM_WINDOW;
    let oh = h + 1 - SSIM_WINDOW;
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            rows[r * ow + c] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * plane[r * w + c + k])
                .sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * rows[(r + k) * ow + c])
                .sum();
        }
    }
    out
}

/// Mean SSIM over all valid 11x11 Gaussian windows (σ = 1.5) and channels.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_same(a, b)?;
    let (h, w) = (a.height(), a.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Dimension(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}"
        )));
    }
    let taps = gaussian_taps();
    let pa = a.planes();
    let pb = b.planes();
    let mut total = 0.0;
    for ch in 0..CHANNELS {
        let x = &pa[ch];
        let y = &pb[ch];
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(y).map(|(u, v)| u * v).collect();
        let mx = filter_valid(x, h, w, &taps);
        let my = filter_valid(y, h, w, &taps);
        let sxx = filter_valid(&xx, h, w, &taps);
        let syy = filter_valid(&yy, h, w, &taps);
        let sxy = filter_valid(&xy, h, w, &taps);
        let mut acc = 0.0;
        for i in 0..mx.len() {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cxy = sxy[i] - ux * uy;
            acc += ((2.0 * ux * uy + SSIM_C1) * (2.0 * cxy + SSIM_C2))
                / ((ux * ux + uy * uy + SSIM_C1) * (vx + vy + SSIM_C2));
        }
        total += acc / mx.len() as f64;
    }
    Ok(total / CHANNELS as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> Image {
        Image::from_fn(h, w, |r, c, ch| ((r * 13 + c * 7 + ch * 31) % 200) as f64)
    }

    #[test]
    fn identical_images() {
        let a = ramp(16, 12);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let flat = Image::from_fn(12, 12, |_, _, _| 100.0);
        assert!((ssim(&flat, &flat.clone()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn off_by_one_everywhere() {
        let a = ramp(8, 8);
        let b = Image::from_fn(8, 8, |r, c, ch| a.get(r, c, ch) + 1.0);
        let expected = 20.0 * math::log10(255.0);
        assert!((psnr(&a, &b).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 48.1308).abs() < 5e-5);
    }

    #[test]
    fn size_errors() {
        assert!(matches!(
            psnr(&ramp(8, 8), &ramp(8, 9)),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            ssim(&ramp(10, 20), &ramp(10, 20)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn taps_are_normalized_and_symmetric() {
        let t = gaussian_taps();
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(t[0], t[10]);
    }
}
