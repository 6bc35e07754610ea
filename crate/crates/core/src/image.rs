//! Pixel containers, block geometry and quality metrics.

use crate::error::{ensure_same_dims, Error, Result};

/// A single luma plane. Samples are row-major with nominal range `[0, 255]`.
///
/// Planes produced by [`round_truncate`] hold integers only; intermediate
/// planes (for example a denoised target) may carry fractional values.
#[derive(Clone, Debug, PartialEq)]
pub struct ImagePlane {
    width: usize,
    height: usize,
    samples: Vec<f32>,
}

/// Real-valued raster of unbounded range. Carries noise residuals and
/// fingerprint estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterF32 {
    width: usize,
    height: usize,
    samples: Vec<f32>,
}

fn check_shape(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::ZeroArea);
    }
    if width * height != len {
        return Err(Error::SizeMismatch {
            expected: width * height,
            found: len,
        });
    }
    Ok(())
}

fn check_finite(samples: &[f32]) -> Result<()> {
    match samples.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(i)),
        None => Ok(()),
    }
}

macro_rules! plane_accessors {
    ($ty:ty) => {
        impl $ty {
            pub fn width(&self) -> usize {
                self.width
            }

            pub fn height(&self) -> usize {
                self.height
            }

            pub fn dims(&self) -> (usize, usize) {
                (self.width, self.height)
            }

            pub fn len(&self) -> usize {
                self.samples.len()
            }

            pub fn is_empty(&self) -> bool {
                self.samples.is_empty()
            }

            pub fn samples(&self) -> &[f32] {
                &self.samples
            }

            pub fn into_samples(self) -> Vec<f32> {
                self.samples
            }

            pub fn get(&self, x: usize, y: usize) -> f32 {
                self.samples[y * self.width + x]
            }

            /// Copies out the rectangle described by `block`.
            pub fn crop(&self, block: &Block) -> Self {
                let mut samples = Vec::with_capacity(block.width * block.height);
                for y in block.y..block.y + block.height {
                    let row = y * self.width;
                    samples.extend_from_slice(&self.samples[row + block.x..row + block.x + block.width]);
                }
                Self {
                    width: block.width,
                    height: block.height,
                    samples,
                }
            }

            /// Writes `src` into the rectangle described by `block`.
            pub fn paste(&mut self, block: &Block, src: &Self) {
                debug_assert_eq!((block.width, block.height), src.dims());
                for (dy, y) in (block.y..block.y + block.height).enumerate() {
                    let row = y * self.width;
                    self.samples[row + block.x..row + block.x + block.width]
                        .copy_from_slice(&src.samples[dy * block.width..(dy + 1) * block.width]);
                }
            }
        }
    };
}

plane_accessors!(ImagePlane);
plane_accessors!(RasterF32);

impl ImagePlane {
    pub fn new(width: usize, height: usize, samples: Vec<f32>) -> Result<Self> {
        check_shape(width, height, samples.len())?;
        check_finite(&samples)?;
        Ok(Self {
            width,
            height,
            samples,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_bytes(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(width, height, bytes.iter().map(|&b| f32::from(b)).collect())
    }

    /// Samples as bytes. Values are rounded and clamped, so this is lossless
    /// for planes that came out of [`round_truncate`].
    pub fn to_bytes(&self) -> Vec<u8> {
        self.samples.iter().map(|&v| quantize(f64::from(v)) as u8).collect()
    }

    pub fn to_raster(&self) -> RasterF32 {
        RasterF32 {
            width: self.width,
            height: self.height,
            samples: self.samples.clone(),
        }
    }
}

impl RasterF32 {
    pub fn new(width: usize, height: usize, samples: Vec<f32>) -> Result<Self> {
        check_shape(width, height, samples.len())?;
        check_finite(&samples)?;
        Ok(Self {
            width,
            height,
            samples,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![0.0; width * height])
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds a raster from double precision samples, narrowing to `f32`.
    pub fn from_f64(width: usize, height: usize, samples: &[f64]) -> Result<Self> {
        Self::new(width, height, samples.iter().map(|&v| v as f32).collect())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.samples.iter().map(|&v| f64::from(v)).collect()
    }

    /// Element-wise product, used for the `J * K` detector reference.
    pub fn multiply(&self, other: &RasterF32) -> Result<RasterF32> {
        ensure_same_dims(self.dims(), other.dims())?;
        let samples = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| a * b)
            .collect();
        Ok(RasterF32 {
            width: self.width,
            height: self.height,
            samples,
        })
    }
}

impl From<&ImagePlane> for RasterF32 {
    fn from(plane: &ImagePlane) -> Self {
        plane.to_raster()
    }
}

/// Rounds half away from zero and clamps to `[0, 255]`.
#[inline]
pub(crate) fn quantize(v: f64) -> f32 {
    v.round().clamp(0.0, 255.0) as f32
}

/// The `[.]` operation: nearest integer, then truncation into `[0, 255]`.
pub fn round_truncate(x: &RasterF32) -> ImagePlane {
    ImagePlane {
        width: x.width,
        height: x.height,
        samples: x.samples.iter().map(|&v| quantize(f64::from(v))).collect(),
    }
}

/// Peak signal-to-noise ratio for 8-bit content, in dB.
///
/// Identical planes yield `f64::INFINITY`.
pub fn psnr(a: &ImagePlane, b: &ImagePlane) -> Result<f64> {
    ensure_same_dims(a.dims(), b.dims())?;
    Ok(psnr_slices(&a.samples, &b.samples))
}

pub(crate) fn psnr_slices(a: &[f32], b: &[f32]) -> f64 {
    let sse: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum();
    psnr_from_mse(sse / a.len() as f64)
}

pub(crate) fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0 * 255.0 / mse).log10()
    }
}

/// Rectangular region of a plane, in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Block {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

/// Non-overlapping tiling of a plane into `side x side` blocks, row-major.
///
/// Edge blocks are smaller when `side` does not divide the plane dimensions.
#[derive(Clone, Debug)]
pub struct BlockGrid {
    block_side: usize,
    blocks: Vec<Block>,
}

impl BlockGrid {
    pub fn new(width: usize, height: usize, block_side: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::ZeroArea);
        }
        if block_side == 0 {
            return Err(crate::error::invalid("block_side", "must be positive"));
        }
        let mut blocks = Vec::new();
        for y in (0..height).step_by(block_side) {
            for x in (0..width).step_by(block_side) {
                blocks.push(Block {
                    x,
                    y,
                    width: block_side.min(width - x),
                    height: block_side.min(height - y),
                });
            }
        }
        Ok(Self { block_side, blocks })
    }

    pub fn block_side(&self) -> usize {
        self.block_side
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}
