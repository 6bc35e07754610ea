//! Image decoding (binary PGM, PNG) and the `PRNU` raster container.
//!
//! Raster layout: 16-byte header (`b"PRNU"`, `u32` width, `u32` height,
//! `u32` reserved = 0, all little-endian) followed by `width * height`
//! little-endian `f32` samples in row-major order.

use std::fs;
use std::path::Path;

use image::{DynamicImage, ImageFormat};

use crate::error::{Error, Result};
use crate::image::{ImagePlane, RasterF32};

pub const RASTER_MAGIC: &[u8; 4] = b"PRNU";
pub const RASTER_HEADER_LEN: usize = 16;

fn unreadable(path: &Path, reason: impl Into<String>) -> Error {
    Error::UnreadableFile {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// BT.601 luma, rounded to the nearest integer.
pub fn luma(r: u8, g: u8, b: u8) -> f32 {
    (0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b))
        .round()
        .clamp(0.0, 255.0) as f32
}

/// Loads an 8-bit binary PGM or an 8/24-bit PNG as a single luma plane.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImagePlane> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| unreadable(path, e.to_string()))?;
    if bytes.starts_with(b"P5") {
        decode_pgm(&bytes).map_err(|e| match e {
            Error::UnreadableFile { reason, .. } => unreadable(path, reason),
            other => other,
        })
    } else {
        decode_png(path, &bytes)
    }
}

fn decode_png(path: &Path, bytes: &[u8]) -> Result<ImagePlane> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| unreadable(path, e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::ZeroArea);
    }
    match img {
        DynamicImage::ImageLuma8(buf) => ImagePlane::from_bytes(w, h, buf.as_raw()),
        DynamicImage::ImageLumaA8(buf) => {
            let samples = buf.pixels().map(|p| f32::from(p.0[0])).collect();
            ImagePlane::new(w, h, samples)
        }
        DynamicImage::ImageRgb8(buf) => {
            let samples = buf.pixels().map(|p| luma(p.0[0], p.0[1], p.0[2])).collect();
            ImagePlane::new(w, h, samples)
        }
        DynamicImage::ImageRgba8(buf) => {
            let samples = buf.pixels().map(|p| luma(p.0[0], p.0[1], p.0[2])).collect();
            ImagePlane::new(w, h, samples)
        }
        other => Err(Error::UnsupportedBitDepth(format!("{:?}", other.color()))),
    }
}

/// Splits off the next whitespace-delimited header token, skipping comments.
fn next_token<'a>(data: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < data.len() && data[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < data.len() && data[*pos] == b'#' {
            while *pos < data.len() && data[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < data.len() && !data[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| &data[start..*pos])
}

fn decode_pgm(bytes: &[u8]) -> Result<ImagePlane> {
    let bad = |reason: &str| Error::UnreadableFile {
        path: Default::default(),
        reason: reason.to_string(),
    };
    let mut pos = 2;
    let mut field = |name: &str| -> Result<usize> {
        next_token(bytes, &mut pos)
            .and_then(|t| std::str::from_utf8(t).ok())
            .and_then(|t| t.parse::<usize>().ok())
            .ok_or_else(|| bad(&format!("truncated or malformed PGM header ({name})")))
    };
    let width = field("width")?;
    let height = field("height")?;
    let maxval = field("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::ZeroArea);
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::UnsupportedBitDepth(format!("PGM maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    let start = pos + 1;
    let need = width * height;
    if bytes.len() < start + need {
        return Err(bad("PGM payload shorter than header declares"));
    }
    ImagePlane::from_bytes(width, height, &bytes[start..start + need])
}

/// Encodes an 8-bit binary PGM. Samples are rounded and clamped.
pub fn encode_pgm(plane: &ImagePlane) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", plane.width(), plane.height()).into_bytes();
    out.extend(plane.to_bytes());
    out
}

pub fn save_pgm(plane: &ImagePlane, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_pgm(plane))?;
    Ok(())
}

pub fn encode_raster(raster: &RasterF32) -> Vec<u8> {
    let mut out = Vec::with_capacity(RASTER_HEADER_LEN + 4 * raster.len());
    out.extend_from_slice(RASTER_MAGIC);
    out.extend_from_slice(&(raster.width() as u32).to_le_bytes());
    out.extend_from_slice(&(raster.height() as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for v in raster.samples() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_raster(bytes: &[u8]) -> Result<RasterF32> {
    if bytes.len() < RASTER_HEADER_LEN {
        return Err(Error::SizeMismatch {
            expected: RASTER_HEADER_LEN,
            found: bytes.len(),
        });
    }
    if &bytes[..4] != RASTER_MAGIC {
        return Err(Error::BadMagic);
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (width, height) = (word(4), word(8));
    let payload = &bytes[RASTER_HEADER_LEN..];
    let expected = width * height * 4;
    if payload.len() != expected {
        return Err(Error::SizeMismatch {
            expected,
            found: payload.len(),
        });
    }
    let samples = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    RasterF32::new(width, height, samples)
}

pub fn save_raster(raster: &RasterF32, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_raster(raster))?;
    Ok(())
}

pub fn load_raster(path: impl AsRef<Path>) -> Result<RasterF32> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| unreadable(path, e.to_string()))?;
    decode_raster(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pgm_bytes_map_directly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.pgm");
        fs::write(&path, b"P5\n2 2\n255\n\x00\xff\x80\x40").unwrap();
        let plane = load_image(&path).unwrap();
        assert_eq!(plane.dims(), (2, 2));
        assert_eq!(plane.samples(), &[0.0, 255.0, 128.0, 64.0]);
    }

    #[test]
    fn pgm_with_comment() {
        let plane = decode_pgm(b"P5 # made by hand\n1 1 255\n\x07").unwrap();
        assert_eq!(plane.samples(), &[7.0]);
    }

    #[test]
    fn truncated_pgm_header_is_unreadable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        fs::write(&path, b"P5\n2 ").unwrap();
        let err = load_image(&path).unwrap_err();
        assert!(matches!(err, Error::UnreadableFile { .. }));
        assert!(err.to_string().starts_with("unreadable file"));
    }

    #[test]
    fn pgm_sixteen_bit_rejected() {
        assert!(matches!(
            decode_pgm(b"P5\n1 1\n65535\n\x00\x01"),
            Err(Error::UnsupportedBitDepth(_))
        ));
    }

    #[test]
    fn pgm_zero_area_rejected() {
        assert!(matches!(decode_pgm(b"P5\n0 4\n255\n"), Err(Error::ZeroArea)));
    }

    #[test]
    fn missing_file_is_unreadable() {
        assert!(matches!(
            load_image("/nonexistent/x.pgm"),
            Err(Error::UnreadableFile { .. })
        ));
    }

    #[test]
    fn rgb_png_reduced_to_luma() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("red.png");
        let buf = image::RgbImage::from_raw(1, 1, vec![255, 0, 0]).unwrap();
        buf.save(&path).unwrap();
        let plane = load_image(&path).unwrap();
        // round(0.299 * 255) = round(76.245)
        assert_eq!(plane.samples(), &[76.0]);
    }

    #[test]
    fn gray_png_loads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        image::GrayImage::from_raw(2, 1, vec![3, 250]).unwrap().save(&path).unwrap();
        assert_eq!(load_image(&path).unwrap().samples(), &[3.0, 250.0]);
    }

    #[test]
    fn sixteen_bit_png_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g16.png");
        image::ImageBuffer::<image::Luma<u16>, _>::from_raw(1, 1, vec![1000u16])
            .unwrap()
            .save(&path)
            .unwrap();
        assert!(matches!(load_image(&path), Err(Error::UnsupportedBitDepth(_))));
    }

    #[test]
    fn pgm_round_trip() {
        let plane = ImagePlane::from_bytes(3, 2, &[1, 2, 3, 250, 0, 9]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.pgm");
        save_pgm(&plane, &path).unwrap();
        assert_eq!(load_image(&path).unwrap(), plane);
    }

    #[test]
    fn raster_file_size() {
        let r = RasterF32::zeros(3, 2).unwrap();
        assert_eq!(encode_raster(&r).len(), 16 + 24);
    }

    #[test]
    fn raster_bad_magic() {
        let mut bytes = encode_raster(&RasterF32::zeros(2, 2).unwrap());
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode_raster(&bytes), Err(Error::BadMagic)));
    }

    #[test]
    fn raster_payload_mismatch() {
        let mut bytes = encode_raster(&RasterF32::zeros(2, 2).unwrap());
        bytes.pop();
        assert!(matches!(decode_raster(&bytes), Err(Error::SizeMismatch { .. })));
    }

    proptest! {
        #[test]
        fn raster_round_trip_bit_exact(w in 1usize..12, h in 1usize..12, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let samples: Vec<f32> = (0..w * h).map(|_| rng.random_range(-1e6f32..1e6)).collect();
            let r = RasterF32::new(w, h, samples).unwrap();
            let back = decode_raster(&encode_raster(&r)).unwrap();
            prop_assert_eq!(back.dims(), r.dims());
            for (a, b) in back.samples().iter().zip(r.samples()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
