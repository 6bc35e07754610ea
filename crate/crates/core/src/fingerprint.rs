//! Fingerprint estimation, the correlation detector and threshold calibration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::denoise::{residual, DenoiseParams};
use crate::error::{ensure_same_dims, Error, Result};
use crate::image::{Block, ImagePlane, RasterF32};
use crate::stats::check_probability;

/// Estimate of the multiplicative PRNU factor of one camera.
#[derive(Clone, Debug, PartialEq)]
pub struct Fingerprint {
    raster: RasterF32,
    source_count: usize,
}

impl Fingerprint {
    pub fn new(raster: RasterF32, source_count: usize) -> Result<Self> {
        if source_count == 0 {
            return Err(Error::EmptyInput("fingerprint needs at least one source image"));
        }
        Ok(Self {
            raster,
            source_count,
        })
    }

    pub fn raster(&self) -> &RasterF32 {
        &self.raster
    }

    pub fn source_count(&self) -> usize {
        self.source_count
    }

    pub fn dims(&self) -> (usize, usize) {
        self.raster.dims()
    }
}

/// Per-pixel maximum-likelihood estimate `sum(W_i I_i) / sum(I_i^2)` over the
/// images selected by `indices`, restricted to `block`.
///
/// Accumulation runs in the order of `indices`. Pixels with a zero
/// denominator map to zero.
pub fn estimate_region(
    images: &[ImagePlane],
    residuals: &[RasterF32],
    indices: &[usize],
    block: &Block,
) -> Result<RasterF32> {
    let n = block.width * block.height;
    let mut num = vec![0.0f64; n];
    let mut den = vec![0.0f64; n];
    for &i in indices {
        let (img, res) = (&images[i], &residuals[i]);
        let stride = img.width();
        for dy in 0..block.height {
            let row = (block.y + dy) * stride + block.x;
            let ii = &img.samples()[row..row + block.width];
            let ww = &res.samples()[row..row + block.width];
            let base = dy * block.width;
            for x in 0..block.width {
                let v = f64::from(ii[x]);
                num[base + x] += f64::from(ww[x]) * v;
                den[base + x] += v * v;
            }
        }
    }
    let k: Vec<f64> = num
        .iter()
        .zip(&den)
        .map(|(&a, &b)| if b == 0.0 { 0.0 } else { a / b })
        .collect();
    RasterF32::from_f64(block.width, block.height, &k)
}

fn check_uniform(images: &[ImagePlane]) -> Result<(usize, usize)> {
    let first = images
        .first()
        .ok_or(Error::EmptyInput("no images supplied"))?
        .dims();
    for img in images {
        ensure_same_dims(first, img.dims())?;
    }
    Ok(first)
}

/// Fingerprint from images whose residuals are already known.
pub fn estimate_from_residuals(images: &[ImagePlane], residuals: &[RasterF32]) -> Result<Fingerprint> {
    let (w, h) = check_uniform(images)?;
    if residuals.len() != images.len() {
        return Err(crate::error::invalid(
            "residuals",
            format!("{} residuals for {} images", residuals.len(), images.len()),
        ));
    }
    for r in residuals {
        ensure_same_dims((w, h), r.dims())?;
    }
    let whole = Block {
        x: 0,
        y: 0,
        width: w,
        height: h,
    };
    let indices: Vec<usize> = (0..images.len()).collect();
    Fingerprint::new(estimate_region(images, residuals, &indices, &whole)?, images.len())
}

/// Residuals of every image, extracted concurrently and returned in order.
pub fn residuals_of(images: &[ImagePlane], p: &DenoiseParams) -> Result<Vec<RasterF32>> {
    images.par_iter().map(|img| residual(img, p)).collect()
}

/// Estimates the fingerprint of the camera that took `images`.
pub fn estimate_fingerprint(images: &[ImagePlane], p: &DenoiseParams) -> Result<Fingerprint> {
    check_uniform(images)?;
    let residuals = residuals_of(images, p)?;
    estimate_from_residuals(images, &residuals)
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut dot, mut ea, mut eb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        dot += dx * dy;
        ea += dx * dx;
        eb += dy * dy;
    }
    if ea == 0.0 || eb == 0.0 {
        return Err(Error::Degenerate("zero-variance input to correlation"));
    }
    Ok((dot / (ea.sqrt() * eb.sqrt())).clamp(-1.0, 1.0))
}

/// Normalized (Pearson) correlation of two equally sized rasters.
pub fn correlation(a: &RasterF32, b: &RasterF32) -> Result<f64> {
    ensure_same_dims(a.dims(), b.dims())?;
    pearson(&a.to_f64(), &b.to_f64())
}

/// Detector statistic `corr(W_J, J * K)` for an image whose residual is known.
pub fn detect_with_residual(j: &ImagePlane, w_j: &RasterF32, k: &Fingerprint) -> Result<f64> {
    ensure_same_dims(j.dims(), k.dims())?;
    ensure_same_dims(j.dims(), w_j.dims())?;
    let reference: Vec<f64> = j
        .samples()
        .iter()
        .zip(k.raster().samples())
        .map(|(&a, &b)| f64::from(a) * f64::from(b))
        .collect();
    pearson(&w_j.to_f64(), &reference)
}

/// Correlation detector: is `k`'s fingerprint present in `j`?
pub fn detect(j: &ImagePlane, k: &Fingerprint, p: &DenoiseParams) -> Result<f64> {
    ensure_same_dims(j.dims(), k.dims())?;
    let w = residual(j, p)?;
    detect_with_residual(j, &w, k)
}

/// [`detect`] over many images, in parallel, results in input order.
pub fn detect_many(images: &[ImagePlane], k: &Fingerprint, p: &DenoiseParams) -> Result<Vec<f64>> {
    images.par_iter().map(|j| detect(j, k, p)).collect()
}

/// Threshold `t1` of the correlation detector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub threshold: f64,
    pub target_pfa: f64,
    pub negative_count: usize,
    #[serde(skip)]
    pub negative_scores: Vec<f64>,
}

impl DetectorModel {
    /// An image is attributed to the camera iff its statistic exceeds `t1`.
    pub fn decide(&self, rho: f64) -> bool {
        rho > self.threshold
    }
}

/// Picks the smallest threshold whose empirical false-alarm rate on
/// `negatives` does not exceed `pfa`: the `ceil((1 - pfa) M)`-th order
/// statistic.
pub fn calibrate_threshold(negatives: &[f64], pfa: f64) -> Result<DetectorModel> {
    if negatives.is_empty() {
        return Err(Error::EmptyInput("no negative scores to calibrate on"));
    }
    check_probability("pfa", pfa)?;
    let mut sorted = negatives.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    // guard against (1 - pfa) * m landing a hair above an integer
    let rank = (((1.0 - pfa) * m as f64) - 1e-9).ceil().clamp(1.0, m as f64) as usize;
    Ok(DetectorModel {
        threshold: sorted[rank - 1],
        target_pfa: pfa,
        negative_count: m,
        negative_scores: negatives.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raster(w: usize, h: usize, v: &[f32]) -> RasterF32 {
        RasterF32::new(w, h, v.to_vec()).unwrap()
    }

    #[test]
    fn single_constant_image_closed_form() {
        let p = DenoiseParams::extraction();
        let mut samples = vec![90.0f32; 32 * 32];
        samples[5] = 100.0;
        samples[300] = 70.0;
        let img = ImagePlane::new(32, 32, samples).unwrap();
        let w = residual(&img, &p).unwrap();
        let k = estimate_fingerprint(std::slice::from_ref(&img), &p).unwrap();
        for i in 0..img.len() {
            let expect = w.samples()[i] / img.samples()[i];
            assert!((k.raster().samples()[i] - expect).abs() < 1e-6);
        }
    }

    #[test]
    fn stubbed_residuals_match_brute_force() {
        let imgs = [
            ImagePlane::new(2, 2, vec![10.0, 0.0, 3.0, 200.0]).unwrap(),
            ImagePlane::new(2, 2, vec![20.0, 0.0, 0.0, 100.0]).unwrap(),
        ];
        let res = [raster(2, 2, &[1.0, 5.0, -2.0, 0.5]), raster(2, 2, &[-1.0, 7.0, 4.0, 2.0])];
        let k = estimate_from_residuals(&imgs, &res).unwrap();
        let mut oracle = [0.0f32; 4];
        for (px, o) in oracle.iter_mut().enumerate() {
            let mut num = 0.0f64;
            let mut den = 0.0f64;
            for i in 0..2 {
                let v = f64::from(imgs[i].samples()[px]);
                num += f64::from(res[i].samples()[px]) * v;
                den += v * v;
            }
            *o = if den == 0.0 { 0.0 } else { (num / den) as f32 };
        }
        assert_eq!(k.raster().samples(), &oracle);
        // all-black pixel maps to zero
        assert_eq!(k.raster().samples()[1], 0.0);
        assert_eq!(k.source_count(), 2);
    }

    #[test]
    fn estimate_rejects_bad_input() {
        let p = DenoiseParams::extraction();
        assert!(matches!(estimate_fingerprint(&[], &p), Err(Error::EmptyInput(_))));
        let a = ImagePlane::filled(16, 16, 1.0).unwrap();
        let b = ImagePlane::filled(16, 32, 1.0).unwrap();
        assert!(matches!(
            estimate_fingerprint(&[a, b], &p),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn correlation_hand_values() {
        let x = raster(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let y = raster(4, 1, &[2.0, 1.0, 4.0, 3.0]);
        let neg = raster(4, 1, &[-1.0, -2.0, -3.0, -4.0]);
        assert!((correlation(&x, &y).unwrap() - 0.6).abs() < 1e-9);
        assert!((correlation(&x, &x).unwrap() - 1.0).abs() < 1e-9);
        assert!((correlation(&x, &neg).unwrap() + 1.0).abs() < 1e-9);
    }

    #[test]
    fn correlation_degenerate() {
        let x = raster(2, 1, &[1.0, 2.0]);
        let c = raster(2, 1, &[3.0, 3.0]);
        assert!(matches!(correlation(&x, &c), Err(Error::Degenerate(_))));
    }

    #[test]
    fn detect_zero_fingerprint_is_degenerate() {
        let samples: Vec<f32> = (0..32 * 32).map(|i| (i % 251) as f32).collect();
        let j = ImagePlane::new(32, 32, samples).unwrap();
        let k = Fingerprint::new(RasterF32::zeros(32, 32).unwrap(), 1).unwrap();
        let err = detect(&j, &k, &DenoiseParams::extraction()).unwrap_err();
        assert!(err.to_string().starts_with("degenerate input"));
    }

    #[test]
    fn threshold_order_statistic() {
        let m = calibrate_threshold(&[0.4, 0.1, 0.3, 0.2], 0.25).unwrap();
        assert_eq!(m.threshold, 0.3);
        assert_eq!(m.negative_count, 4);
        let m = calibrate_threshold(&[0.4, 0.1, 0.3, 0.2], 0.8).unwrap();
        assert_eq!(m.threshold, 0.1);
        assert!(calibrate_threshold(&[], 0.1).is_err());
        assert!(calibrate_threshold(&[0.1], 1.0).is_err());
    }

    #[test]
    fn detector_model_json() {
        let m = calibrate_threshold(&[0.1, 0.2], 0.5).unwrap();
        let v: serde_json::Value = serde_json::to_value(&m).unwrap();
        assert_eq!(v["negative_count"], 2);
        assert!(v.get("negative_scores").is_none());
    }

    proptest! {
        #[test]
        fn correlation_affine_invariant(
            x in prop::collection::vec(-50.0f32..50.0, 16),
            y in prop::collection::vec(-50.0f32..50.0, 16),
            a in 0.1f32..10.0,
            b in -20.0f32..20.0,
        ) {
            let xr = raster(4, 4, &x);
            let yr = raster(4, 4, &y);
            let scaled: Vec<f32> = x.iter().map(|v| a * v + b).collect();
            if let (Ok(c0), Ok(c1)) = (correlation(&xr, &yr), correlation(&raster(4, 4, &scaled), &yr)) {
                // f32 storage of the scaled raster limits agreement
                prop_assert!((c0 - c1).abs() < 1e-4);
                prop_assert!((-1.0..=1.0).contains(&c0));
            }
        }

        #[test]
        fn threshold_respects_pfa(scores in prop::collection::vec(-1.0f64..1.0, 1..200), pfa in 0.001f64..0.999) {
            let m = calibrate_threshold(&scores, pfa).unwrap();
            let above = scores.iter().filter(|&&s| s > m.threshold).count();
            prop_assert!(above as f64 <= pfa * scores.len() as f64 + 1e-9);
            // any strictly smaller score would violate the bound
            let lower = scores.iter().copied().filter(|&s| s < m.threshold).fold(f64::NEG_INFINITY, f64::max);
            if lower.is_finite() {
                let above_lower = scores.iter().filter(|&&s| s > lower).count();
                prop_assert!(above_lower as f64 > pfa * scores.len() as f64);
            }
        }

        #[test]
        fn estimate_permutation_invariant(seed in any::<u64>()) {
            use rand::{seq::SliceRandom, Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let imgs: Vec<ImagePlane> = (0..4)
                .map(|_| ImagePlane::new(3, 3, (0..9).map(|_| rng.random_range(0..256) as f32).collect()).unwrap())
                .collect();
            let res: Vec<RasterF32> = (0..4)
                .map(|_| RasterF32::new(3, 3, (0..9).map(|_| rng.random_range(-5.0f32..5.0)).collect()).unwrap())
                .collect();
            let k0 = estimate_from_residuals(&imgs, &res).unwrap();
            let mut order: Vec<usize> = (0..4).collect();
            order.shuffle(&mut rng);
            let imgs2: Vec<_> = order.iter().map(|&i| imgs[i].clone()).collect();
            let res2: Vec<_> = order.iter().map(|&i| res[i].clone()).collect();
            let k1 = estimate_from_residuals(&imgs2, &res2).unwrap();
            for (a, b) in k0.raster().samples().iter().zip(k1.raster().samples()) {
                prop_assert!((a - b).abs() <= 1e-6 * a.abs().max(1e-6));
            }
        }
    }
}
