//! Fingerprint-copy attacks.
//!
//! The conventional attack estimates one fake fingerprint from every stolen
//! image and superimposes it over the whole target. The block-wise attack
//! tiles the target, estimates a separate fingerprint for every tile from a
//! random subset of `r` stolen images, and sets each tile's strength so the
//! tile's PSNR hits a target value.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::denoise::{denoise, DenoiseParams};
use crate::error::{ensure_same_dims, invalid, Error, Result};
use crate::fingerprint::{estimate_region, residuals_of, Fingerprint};
use crate::image::{psnr, psnr_from_mse, quantize, round_truncate, Block, BlockGrid, ImagePlane, RasterF32};

/// Initial upper bracket of the strength search.
pub const INITIAL_STRENGTH: f64 = 0.05;
pub const MAX_DOUBLINGS: usize = 20;
pub const MAX_BISECTIONS: usize = 40;
/// Hard cap on PSNR evaluations per block.
pub const MAX_PROBES: usize = 60;
/// A block counts as on target when its PSNR is this close to the goal.
pub const BLOCK_TOLERANCE_DB: f64 = 0.2;

/// Accepted band for the target PSNR.
pub const PSNR_ACCEPTED: (f64, f64) = (40.0, 60.0);
/// Band in which a copied fingerprint of natural strength usually lands.
pub const PSNR_TYPICAL: (f64, f64) = (47.6, 58.7);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackParams {
    /// Tile side `l`.
    pub block_side: usize,
    /// Stolen images drawn per tile, `r`.
    pub subset_size: usize,
    /// Target PSNR `A`, in dB.
    pub target_psnr: f64,
    pub seed: u64,
    pub predenoise_sigma: f64,
}

impl AttackParams {
    pub fn new(block_side: usize, subset_size: usize, target_psnr: f64, seed: u64) -> Self {
        Self {
            block_side,
            subset_size,
            target_psnr,
            seed,
            predenoise_sigma: 1.0,
        }
    }

    /// Checks the parameters against a pool of `stolen` images.
    pub fn validate(&self, stolen: usize) -> Result<()> {
        if self.block_side < 8 {
            return Err(invalid("l", format!("block side {} is below 8", self.block_side)));
        }
        if self.subset_size == 0 || self.subset_size > stolen {
            return Err(invalid(
                "r",
                format!("subset size {} must lie in 1..={stolen}", self.subset_size),
            ));
        }
        check_target_psnr(self.target_psnr)?;
        if !(self.predenoise_sigma > 0.0) {
            return Err(invalid("predenoise_sigma", "must be positive"));
        }
        Ok(())
    }
}

fn check_target_psnr(a: f64) -> Result<()> {
    if !(PSNR_ACCEPTED.0..=PSNR_ACCEPTED.1).contains(&a) {
        return Err(invalid(
            "A",
            format!("target PSNR {a} dB outside {:?}", PSNR_ACCEPTED),
        ));
    }
    if !(PSNR_TYPICAL.0..=PSNR_TYPICAL.1).contains(&a) {
        log::warn!("target PSNR {a} dB is outside the typical band {:?}", PSNR_TYPICAL);
    }
    Ok(())
}

/// Outcome of the strength search for one block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockStatus {
    OnTarget,
    /// Best achievable PSNR is further than [`BLOCK_TOLERANCE_DB`] from the goal.
    OffTarget,
    /// No probed strength changed a single pixel; block left unmodified.
    Unreachable,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StrengthSearch {
    pub alpha: f64,
    pub psnr: f64,
    pub probes: usize,
}

/// Returns `round_truncate(J * (1 + alpha * K))`.
pub fn superimpose(j: &ImagePlane, k: &RasterF32, alpha: f64) -> Result<ImagePlane> {
    ensure_same_dims(j.dims(), k.dims())?;
    if !(alpha >= 0.0) {
        return Err(invalid("alpha", format!("strength must be non-negative, got {alpha}")));
    }
    let samples: Vec<f32> = j
        .samples()
        .iter()
        .zip(k.samples())
        .map(|(&jv, &kv)| quantize(f64::from(jv) * (1.0 + alpha * f64::from(kv))))
        .collect();
    ImagePlane::new(j.width(), j.height(), samples)
}

fn superimposed_psnr(j: &ImagePlane, k: &RasterF32, alpha: f64) -> f64 {
    let sse: f64 = j
        .samples()
        .iter()
        .zip(k.samples())
        .map(|(&jv, &kv)| {
            let jv = f64::from(jv);
            let d = f64::from(quantize(jv * (1.0 + alpha * f64::from(kv)))) - jv;
            d * d
        })
        .sum();
    psnr_from_mse(sse / j.len() as f64)
}

/// Finds the strength whose superimposition lands closest to `target` dB.
///
/// Doubles an upper bracket from [`INITIAL_STRENGTH`] until the PSNR drops
/// below the target, then bisects. Returns the best probe seen.
pub fn find_strength(jb: &ImagePlane, kb: &RasterF32, target: f64) -> Result<StrengthSearch> {
    ensure_same_dims(jb.dims(), kb.dims())?;
    let mut probes = 0;
    let mut best: Option<StrengthSearch> = None;
    let mut probe = |alpha: f64, probes: &mut usize| {
        *probes += 1;
        let p = superimposed_psnr(jb, kb, alpha);
        if p.is_finite() && best.is_none_or(|b| (p - target).abs() < (b.psnr - target).abs()) {
            best = Some(StrengthSearch {
                alpha,
                psnr: p,
                probes: 0,
            });
        }
        p
    };

    let mut lo = 0.0;
    let mut hi = INITIAL_STRENGTH;
    let mut p_hi = probe(hi, &mut probes);
    let mut doublings = 0;
    while p_hi >= target && doublings < MAX_DOUBLINGS {
        lo = hi;
        hi *= 2.0;
        p_hi = probe(hi, &mut probes);
        doublings += 1;
    }
    if p_hi < target {
        let steps = MAX_BISECTIONS.min(MAX_PROBES - probes);
        for _ in 0..steps {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if probe(mid, &mut probes) >= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    match best {
        Some(b) => Ok(StrengthSearch { probes, ..b }),
        None => Err(Error::UnreachableTarget),
    }
}

/// Stolen images with their noise residuals, extracted once.
#[derive(Clone, Debug)]
pub struct StolenSet {
    images: Vec<ImagePlane>,
    residuals: Vec<RasterF32>,
}

impl StolenSet {
    pub fn new(images: Vec<ImagePlane>, p: &DenoiseParams) -> Result<Self> {
        let residuals = residuals_of(&images, p)?;
        Self::from_parts(images, residuals)
    }

    pub fn from_parts(images: Vec<ImagePlane>, residuals: Vec<RasterF32>) -> Result<Self> {
        let first = images
            .first()
            .ok_or(Error::EmptyInput("no stolen images"))?
            .dims();
        if residuals.len() != images.len() {
            return Err(invalid("residuals", "one residual per stolen image is required"));
        }
        for (img, res) in images.iter().zip(&residuals) {
            ensure_same_dims(first, img.dims())?;
            ensure_same_dims(first, res.dims())?;
        }
        Ok(Self { images, residuals })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.images[0].dims()
    }

    pub fn images(&self) -> &[ImagePlane] {
        &self.images
    }

    pub fn residuals(&self) -> &[RasterF32] {
        &self.residuals
    }

    /// Fake fingerprint over `block` from the images at `indices`.
    pub fn estimate(&self, indices: &[usize], block: &Block) -> Result<RasterF32> {
        estimate_region(&self.images, &self.residuals, indices, block)
    }

    /// Fake fingerprint from every stolen image.
    pub fn fingerprint(&self) -> Result<Fingerprint> {
        crate::fingerprint::estimate_from_residuals(&self.images, &self.residuals)
    }
}

/// Result of forging one target image.
#[derive(Clone, Debug, PartialEq)]
pub struct ForgeryRecord {
    /// The forgery `J'`.
    pub forged: ImagePlane,
    /// The pre-denoised target the fingerprint was superimposed on.
    pub reference: ImagePlane,
    pub params: AttackParams,
    pub blocks: Vec<Block>,
    pub per_block_alpha: Vec<f64>,
    /// Achieved PSNR per block; infinite for untouched blocks.
    pub per_block_psnr: Vec<f64>,
    pub per_block_status: Vec<BlockStatus>,
    pub per_block_probes: Vec<usize>,
    /// Sorted stolen-image indices used for each block.
    pub subset_log: Vec<Vec<usize>>,
    pub overall_psnr: f64,
}

impl ForgeryRecord {
    /// Serializable summary written next to the forged image.
    pub fn sidecar(&self) -> ForgerySidecar {
        let finite = |v: f64| v.is_finite().then_some(v);
        ForgerySidecar {
            schema_version: crate::SCHEMA_VERSION,
            seed: self.params.seed,
            l: self.params.block_side,
            r: self.params.subset_size,
            a: self.params.target_psnr,
            predenoise_sigma: self.params.predenoise_sigma,
            overall_psnr: finite(self.overall_psnr),
            per_block_alpha: self.per_block_alpha.clone(),
            per_block_psnr: self.per_block_psnr.iter().copied().map(finite).collect(),
            per_block_status: self.per_block_status.clone(),
            subset_log: self.subset_log.clone(),
        }
    }

    pub fn flagged_blocks(&self) -> usize {
        self.per_block_status
            .iter()
            .filter(|s| **s != BlockStatus::OnTarget)
            .count()
    }
}

/// JSON sidecar of a [`ForgeryRecord`]. Infinite PSNR values are `null`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForgerySidecar {
    pub schema_version: u32,
    pub seed: u64,
    pub l: usize,
    pub r: usize,
    #[serde(rename = "A")]
    pub a: f64,
    pub predenoise_sigma: f64,
    pub overall_psnr: Option<f64>,
    pub per_block_alpha: Vec<f64>,
    pub per_block_psnr: Vec<Option<f64>>,
    pub per_block_status: Vec<BlockStatus>,
    pub subset_log: Vec<Vec<usize>>,
}

/// Light denoising of the target to suppress its own sensor noise, saved
/// back to 8-bit.
pub fn predenoise_target(j: &ImagePlane, sigma: f64, p: &DenoiseParams) -> Result<ImagePlane> {
    let params = DenoiseParams {
        sigma,
        ..p.clone()
    };
    Ok(round_truncate(&denoise(&j.to_raster(), &params)?))
}

struct ForgedBlock {
    pixels: ImagePlane,
    alpha: f64,
    psnr: f64,
    status: BlockStatus,
    probes: usize,
}

fn forge_block(jb: ImagePlane, kb: &RasterF32, target: f64) -> Result<ForgedBlock> {
    match find_strength(&jb, kb, target) {
        Ok(s) => Ok(ForgedBlock {
            pixels: superimpose(&jb, kb, s.alpha)?,
            alpha: s.alpha,
            psnr: s.psnr,
            status: if (s.psnr - target).abs() <= BLOCK_TOLERANCE_DB {
                BlockStatus::OnTarget
            } else {
                BlockStatus::OffTarget
            },
            probes: s.probes,
        }),
        Err(Error::UnreachableTarget) => Ok(ForgedBlock {
            pixels: jb,
            alpha: 0.0,
            psnr: f64::INFINITY,
            status: BlockStatus::Unreachable,
            probes: MAX_DOUBLINGS + 1,
        }),
        Err(e) => Err(e),
    }
}

fn assemble(
    reference: ImagePlane,
    params: AttackParams,
    blocks: Vec<Block>,
    subset_log: Vec<Vec<usize>>,
    forged_blocks: Vec<ForgedBlock>,
) -> Result<ForgeryRecord> {
    let mut forged = reference.clone();
    for (b, fb) in blocks.iter().zip(&forged_blocks) {
        forged.paste(b, &fb.pixels);
    }
    let overall_psnr = psnr(&forged, &reference)?;
    Ok(ForgeryRecord {
        forged,
        reference,
        params,
        blocks,
        per_block_alpha: forged_blocks.iter().map(|b| b.alpha).collect(),
        per_block_psnr: forged_blocks.iter().map(|b| b.psnr).collect(),
        per_block_status: forged_blocks.iter().map(|b| b.status).collect(),
        per_block_probes: forged_blocks.iter().map(|b| b.probes).collect(),
        subset_log,
        overall_psnr,
    })
}

/// Draws the sorted stolen-image subset for block `index`.
///
/// Each block has its own ChaCha stream keyed by `(seed, index)`, so the draw
/// does not depend on processing order.
pub fn block_subset(seed: u64, index: usize, stolen: usize, r: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let mut picked = rand::seq::index::sample(&mut rng, stolen, r).into_vec();
    picked.sort_unstable();
    picked
}

/// Conventional fingerprint-copy attack with PSNR-selected global strength.
pub fn conventional_attack(
    j: &ImagePlane,
    stolen: &StolenSet,
    target_psnr: f64,
    predenoise_sigma: f64,
    p: &DenoiseParams,
) -> Result<ForgeryRecord> {
    ensure_same_dims(stolen.dims(), j.dims())?;
    check_target_psnr(target_psnr)?;
    let reference = predenoise_target(j, predenoise_sigma, p)?;
    let k = stolen.fingerprint()?;
    let forged = forge_block(reference.clone(), k.raster(), target_psnr)?;
    let whole = Block {
        x: 0,
        y: 0,
        width: j.width(),
        height: j.height(),
    };
    let params = AttackParams {
        block_side: j.width().max(j.height()),
        subset_size: stolen.len(),
        target_psnr,
        seed: 0,
        predenoise_sigma,
    };
    assemble(
        reference,
        params,
        vec![whole],
        vec![(0..stolen.len()).collect()],
        vec![forged],
    )
}

/// Block-wise randomized fingerprint-copy attack.
pub fn block_attack(
    j: &ImagePlane,
    stolen: &StolenSet,
    params: &AttackParams,
    p: &DenoiseParams,
) -> Result<ForgeryRecord> {
    params.validate(stolen.len())?;
    ensure_same_dims(stolen.dims(), j.dims())?;
    let reference = predenoise_target(j, params.predenoise_sigma, p)?;
    let grid = BlockGrid::new(j.width(), j.height(), params.block_side)?;
    let blocks = grid.blocks().to_vec();
    let subset_log: Vec<Vec<usize>> = (0..blocks.len())
        .map(|b| block_subset(params.seed, b, stolen.len(), params.subset_size))
        .collect();
    let forged_blocks = blocks
        .par_iter()
        .zip(&subset_log)
        .map(|(block, subset)| {
            let kb = stolen.estimate(subset, block)?;
            forge_block(reference.crop(block), &kb, params.target_psnr)
        })
        .collect::<Result<Vec<_>>>()?;
    assemble(reference, params.clone(), blocks, subset_log, forged_blocks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_block(seed: u64, side: usize, kmax: f32) -> (ImagePlane, RasterF32) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let j: Vec<f32> = (0..side * side).map(|_| rng.random_range(20..236) as f32).collect();
        let k: Vec<f32> = (0..side * side).map(|_| rng.random_range(-kmax..kmax)).collect();
        (
            ImagePlane::new(side, side, j).unwrap(),
            RasterF32::new(side, side, k).unwrap(),
        )
    }

    #[test]
    fn zero_strength_is_identity() {
        let (j, k) = random_block(1, 16, 0.05);
        assert_eq!(superimpose(&j, &k, 0.0).unwrap(), j);
    }

    #[test]
    fn superimpose_closed_form() {
        let j = ImagePlane::filled(4, 4, 100.0).unwrap();
        let k = RasterF32::filled(4, 4, 0.01).unwrap();
        let out = superimpose(&j, &k, 1.0).unwrap();
        assert!(out.samples().iter().all(|&v| v == 101.0));
    }

    #[test]
    fn black_absorbs_fingerprint() {
        let j = ImagePlane::filled(4, 4, 0.0).unwrap();
        let k = RasterF32::filled(4, 4, 0.3).unwrap();
        assert_eq!(superimpose(&j, &k, 123.0).unwrap(), j);
    }

    #[test]
    fn superimpose_errors() {
        let j = ImagePlane::filled(4, 4, 10.0).unwrap();
        assert!(superimpose(&j, &RasterF32::zeros(4, 4).unwrap(), -1.0).is_err());
        assert!(matches!(
            superimpose(&j, &RasterF32::zeros(4, 5).unwrap(), 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn all_zero_block_unreachable() {
        let j = ImagePlane::filled(32, 32, 0.0).unwrap();
        let k = RasterF32::filled(32, 32, 0.02).unwrap();
        assert!(matches!(find_strength(&j, &k, 50.0), Err(Error::UnreachableTarget)));
    }

    #[test]
    fn very_high_target_stays_tiny() {
        let (j, k) = random_block(2, 32, 0.05);
        let s = find_strength(&j, &k, 80.0).unwrap();
        assert!(s.alpha <= INITIAL_STRENGTH);
        // a single flipped pixel in 1024 already costs more than 80 dB allows
        let status_ok = s.psnr >= 80.0 || (s.psnr - 80.0).abs() > BLOCK_TOLERANCE_DB;
        assert!(status_ok);
        let fb = forge_block(j, &k, 80.0).unwrap();
        assert!(fb.psnr >= 80.0 || fb.status != BlockStatus::OnTarget);
    }

    #[test]
    fn strength_hits_target_on_random_blocks() {
        for seed in 0..50 {
            let (j, k) = random_block(100 + seed, 32, 0.05);
            let s = find_strength(&j, &k, 50.0).unwrap();
            assert!((s.psnr - 50.0).abs() <= 0.2, "seed {seed}: {}", s.psnr);
            assert!(s.probes <= MAX_PROBES);
            let achieved = psnr(&superimpose(&j, &k, s.alpha).unwrap(), &j).unwrap();
            assert_eq!(achieved, s.psnr);
        }
    }

    #[test]
    fn psnr_monotone_in_strength() {
        let (j, k) = random_block(7, 32, 0.05);
        let mut last = f64::INFINITY;
        for i in 1..200 {
            let p = superimposed_psnr(&j, &k, i as f64 * 0.01);
            assert!(p <= last + 0.05, "alpha {}: {p} > {last}", i as f64 * 0.01);
            last = last.min(p);
        }
    }

    #[test]
    fn params_validation() {
        assert!(AttackParams::new(32, 10, 50.0, 1).validate(60).is_ok());
        assert!(AttackParams::new(4, 10, 50.0, 1).validate(60).is_err());
        assert!(AttackParams::new(32, 61, 50.0, 1).validate(60).is_err());
        assert!(AttackParams::new(32, 0, 50.0, 1).validate(60).is_err());
        assert!(AttackParams::new(32, 10, 70.0, 1).validate(60).is_err());
        // outside the typical band only warns
        assert!(AttackParams::new(32, 10, 45.0, 1).validate(60).is_ok());
    }

    #[test]
    fn subsets_are_distinct_and_seeded() {
        for b in 0..20 {
            let s = block_subset(9, b, 60, 10);
            assert_eq!(s.len(), 10);
            assert!(s.windows(2).all(|w| w[0] < w[1]));
            assert!(s.iter().all(|&i| i < 60));
            assert_eq!(s, block_subset(9, b, 60, 10));
        }
        assert_ne!(block_subset(9, 0, 60, 10), block_subset(9, 1, 60, 10));
        assert_ne!(block_subset(9, 0, 60, 10), block_subset(10, 0, 60, 10));
        assert_eq!(block_subset(3, 5, 7, 7), (0..7).collect::<Vec<_>>());
    }
}
