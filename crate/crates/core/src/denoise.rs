//! Wavelet-domain local Wiener filter and noise residual extraction.
//!
//! Each detail coefficient is attenuated by `v / (v + sigma^2)`, where `v` is
//! the smallest of the local variance estimates
//! `max(0, mean(c^2 over window) - sigma^2)` taken over several square
//! windows. The approximation band passes through untouched.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::image::{ImagePlane, RasterF32};
use crate::wavelet::{check_depth, dwt2, idwt2, Subband};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenoiseParams {
    /// Assumed noise standard deviation, in pixel units.
    pub sigma: f64,
    pub levels: usize,
    pub window_sides: Vec<usize>,
}

impl DenoiseParams {
    /// Extraction setting used for fingerprint estimation and detection.
    pub fn extraction() -> Self {
        Self::with_sigma(5.0)
    }

    /// Light denoising applied to a target before fingerprint superimposition.
    pub fn predenoise() -> Self {
        Self::with_sigma(1.0)
    }

    pub fn with_sigma(sigma: f64) -> Self {
        Self {
            sigma,
            levels: 4,
            window_sides: vec![3, 5, 7, 9],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(invalid("sigma", format!("must be positive, got {}", self.sigma)));
        }
        if self.levels == 0 {
            return Err(invalid("levels", "must be at least 1"));
        }
        if self.window_sides.is_empty() {
            return Err(invalid("window_sides", "at least one window is required"));
        }
        if let Some(w) = self.window_sides.iter().find(|&&w| w < 3 || w % 2 == 0) {
            return Err(invalid("window_sides", format!("{w} is not an odd size >= 3")));
        }
        Ok(())
    }
}

impl Default for DenoiseParams {
    fn default() -> Self {
        Self::extraction()
    }
}

/// Summed-area table of squared coefficients, `(w + 1) x (h + 1)`.
fn squared_integral(band: &Subband) -> Vec<f64> {
    let (w, h) = (band.width, band.height);
    let mut table = vec![0.0; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            let v = band.data[y * w + x];
            row += v * v;
            table[(y + 1) * (w + 1) + x + 1] = table[y * (w + 1) + x + 1] + row;
        }
    }
    table
}

fn attenuate(band: &mut Subband, windows: &[usize], noise_var: f64) {
    let (w, h) = (band.width, band.height);
    let table = squared_integral(band);
    let at = |x: usize, y: usize| table[y * (w + 1) + x];
    for y in 0..h {
        for x in 0..w {
            let mut v = f64::INFINITY;
            for &side in windows {
                let r = side / 2;
                let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(w));
                let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(h));
                let sum = at(x1, y1) - at(x0, y1) - at(x1, y0) + at(x0, y0);
                let mean = sum / ((x1 - x0) * (y1 - y0)) as f64;
                v = v.min((mean - noise_var).max(0.0));
            }
            band.data[y * w + x] *= v / (v + noise_var);
        }
    }
}

/// Denoises a row-major plane in double precision.
pub fn denoise_f64(data: &[f64], width: usize, height: usize, p: &DenoiseParams) -> Result<Vec<f64>> {
    p.validate()?;
    check_depth(width, height, p.levels)?;
    let mut pyramid = dwt2(data, width, height, p.levels)?;
    let noise_var = p.sigma * p.sigma;
    for level in &mut pyramid.details {
        for band in level.bands_mut() {
            attenuate(band, &p.window_sides, noise_var);
        }
    }
    Ok(idwt2(&pyramid).0)
}

/// The denoising filter `F`.
pub fn denoise(x: &RasterF32, p: &DenoiseParams) -> Result<RasterF32> {
    let out = denoise_f64(&x.to_f64(), x.width(), x.height(), p)?;
    RasterF32::from_f64(x.width(), x.height(), &out)
}

/// Noise residual `W = I - F(I)`.
pub fn residual(x: &ImagePlane, p: &DenoiseParams) -> Result<RasterF32> {
    let data: Vec<f64> = x.samples().iter().map(|&v| f64::from(v)).collect();
    let smooth = denoise_f64(&data, x.width(), x.height(), p)?;
    let w: Vec<f64> = data.iter().zip(&smooth).map(|(a, b)| a - b).collect();
    RasterF32::from_f64(x.width(), x.height(), &w)
}
