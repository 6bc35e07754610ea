//! Monte-Carlo protocols: forge targets with a given attack, then measure
//! how the correlation detector and the triangle tests respond.
//!
//! A [`World`] holds one owner camera's reference fingerprint, calibrated
//! detector, and image pool with residuals precomputed. Every random choice
//! (who gets stolen, which images fit the null model, attack seeds, pooled
//! subsets) derives from the world's root seed, so a protocol run is a pure
//! function of its inputs.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{block_attack, conventional_attack, AttackParams, BlockStatus, ForgeryRecord, StolenSet};
use crate::denoise::{residual, DenoiseParams};
use crate::error::{invalid, Error, Result};
use crate::fingerprint::{
    calibrate_threshold, detect_many, detect_with_residual, estimate_fingerprint, residuals_of, DetectorModel,
    Fingerprint,
};
use crate::image::{ImagePlane, RasterF32};
use crate::seed::derive_path;
use crate::sim::{BenchData, Manifest, Role};
use crate::stats::mean;
use crate::triangle::{
    estimate_c, fit_null, individual_threshold, multiple_forgeries_test_prepared, pooled_detection_rate,
    pooled_test, LineFit, ResidualModel, TriangleRecord, TriangleSubject,
};

const TAG_ROLES: u64 = 1;
const TAG_ATTACK: u64 = 2;
const TAG_POOLED: u64 = 3;
const TAG_MULTI: u64 = 4;
const TAG_NULL_POOLED: u64 = 5;

/// Which fingerprint-copy attack to run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    Conventional,
    Block { l: usize, r: usize },
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::Conventional => "conventional".into(),
            Method::Block { l, r } => format!("block(l={l},r={r})"),
        }
    }

    /// `(l, r)` columns for reports; the conventional attack is one block
    /// covering the image built from all `n` stolen images.
    pub fn columns(&self, side: usize, n: usize) -> (usize, usize) {
        match *self {
            Method::Conventional => (side, n),
            Method::Block { l, r } => (l, r),
        }
    }
}

/// Images a world is built from.
pub struct WorldImages {
    pub pool: Vec<ImagePlane>,
    pub flat: Vec<ImagePlane>,
    pub negatives: Vec<ImagePlane>,
    pub targets: Vec<ImagePlane>,
}

impl WorldImages {
    pub fn from_bench(data: &BenchData) -> Self {
        Self {
            pool: data.images_with_role(Role::AlicePool),
            flat: data.images_with_role(Role::AliceFlat),
            negatives: data.images_with_role(Role::Negative),
            targets: data.images_with_role(Role::EveTarget),
        }
    }

    /// Loads a bench from its manifest; image paths are relative to the
    /// manifest's directory. True PRNU rasters are never read.
    pub fn from_manifest(path: impl AsRef<Path>) -> Result<(Manifest, Self)> {
        let path = path.as_ref();
        let manifest = Manifest::load(path)?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        let images = Self {
            pool: manifest.load_images(dir, Role::AlicePool)?,
            flat: manifest.load_images(dir, Role::AliceFlat)?,
            negatives: manifest.load_images(dir, Role::Negative)?,
            targets: manifest.load_images(dir, Role::EveTarget)?,
        };
        Ok((manifest, images))
    }
}

pub struct World {
    pub params: DenoiseParams,
    pub predenoise_sigma: f64,
    /// Owner's reference fingerprint, from flat-field captures.
    pub owner: Fingerprint,
    pub detector: DetectorModel,
    pub negative_scores: Vec<f64>,
    pub pool: Vec<ImagePlane>,
    pub pool_residuals: Vec<RasterF32>,
    pub pool_subjects: Vec<TriangleSubject>,
    pub targets: Vec<ImagePlane>,
    pub seed: u64,
}

impl World {
    pub fn build(images: WorldImages, detector_pfa: f64, params: DenoiseParams, seed: u64) -> Result<Self> {
        let WorldImages {
            pool,
            flat,
            negatives,
            targets,
        } = images;
        if pool.is_empty() {
            return Err(Error::EmptyInput("world needs an owner image pool"));
        }
        if targets.is_empty() {
            return Err(Error::EmptyInput("world needs target images"));
        }
        let owner = estimate_fingerprint(&flat, &params)?;
        let negative_scores = detect_many(&negatives, &owner, &params)?;
        let detector = calibrate_threshold(&negative_scores, detector_pfa)?;
        let pool_residuals = residuals_of(&pool, &params)?;
        let pool_subjects = pool
            .par_iter()
            .zip(&pool_residuals)
            .map(|(img, w)| TriangleSubject::from_residual(img, w, &owner))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            params,
            predenoise_sigma: 1.0,
            owner,
            detector,
            negative_scores,
            pool,
            pool_residuals,
            pool_subjects,
            targets,
            seed,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.pool[0].dims()
    }

    /// Shuffles the pool for forgery `index`: the first `n` are stolen, the
    /// next `fit` fit the null model, the rest stay unused.
    pub fn draw_roles(&self, index: u64, n: usize, fit: usize) -> Result<PoolRoles> {
        if n == 0 {
            return Err(invalid("N", "at least one image must be stolen"));
        }
        if n + fit > self.pool.len() {
            return Err(invalid(
                "N",
                format!("N={n} plus {fit} fitting images exceeds the pool of {}", self.pool.len()),
            ));
        }
        let mut order: Vec<usize> = (0..self.pool.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_path(self.seed, &[TAG_ROLES, index])));
        let rest = order.split_off(n + fit);
        let fitting = order.split_off(n);
        Ok(PoolRoles {
            stolen: order,
            fitting,
            unused: rest,
        })
    }

    pub fn stolen_set(&self, indices: &[usize]) -> Result<StolenSet> {
        StolenSet::from_parts(
            indices.iter().map(|&i| self.pool[i].clone()).collect(),
            indices.iter().map(|&i| self.pool_residuals[i].clone()).collect(),
        )
    }

    /// Forges `target` with `method` and prepares it for detection.
    pub fn forge(&self, method: Method, target: &ImagePlane, stolen: &StolenSet, a: f64, seed: u64) -> Result<Forgery> {
        let record = match method {
            Method::Conventional => conventional_attack(target, stolen, a, self.predenoise_sigma, &self.params)?,
            Method::Block { l, r } => {
                let params = AttackParams {
                    predenoise_sigma: self.predenoise_sigma,
                    ..AttackParams::new(l, r, a, seed)
                };
                block_attack(target, stolen, &params, &self.params)?
            }
        };
        let w = residual(&record.forged, &self.params)?;
        let rho = detect_with_residual(&record.forged, &w, &self.owner)?;
        let subject = TriangleSubject::from_residual(&record.forged, &w, &self.owner)?;
        Ok(Forgery { record, rho, subject })
    }
}

/// Detector statistics of `images` against the world's owner fingerprint.
pub fn detector_scores(world: &World, images: &[ImagePlane]) -> Result<Vec<f64>> {
    detect_many(images, &world.owner, &world.params)
}

#[derive(Clone, Debug)]
pub struct PoolRoles {
    pub stolen: Vec<usize>,
    pub fitting: Vec<usize>,
    pub unused: Vec<usize>,
}

pub struct Forgery {
    pub record: ForgeryRecord,
    /// Detector statistic against the owner fingerprint.
    pub rho: f64,
    pub subject: TriangleSubject,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PooledOptions {
    /// `N / N_c` grid.
    pub ratios: Vec<f64>,
    pub k: usize,
    pub repetitions: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellOptions {
    pub forgeries: usize,
    /// Known-unused images fitting the null model of each forgery.
    pub fit_count: usize,
    pub triangle_pfa: f64,
    /// Never-used candidates evaluated per forgery for null calibration.
    pub null_candidates: usize,
    pub pooled: Option<PooledOptions>,
}

impl Default for CellOptions {
    fn default() -> Self {
        Self {
            forgeries: 20,
            fit_count: 100,
            triangle_pfa: 1e-3,
            null_candidates: 0,
            pooled: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub method: Method,
    /// Stolen images `N`.
    pub n: usize,
    /// Target PSNR `A`.
    pub a: f64,
}

/// Everything measured on one forgery.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForgeryOutcome {
    pub forgery: usize,
    pub target: usize,
    pub attack_seed: u64,
    pub rho: f64,
    pub identified: bool,
    pub overall_psnr: f64,
    pub blocks: usize,
    pub flagged_blocks: usize,
    /// Largest `|psnr - A|` over on-target blocks.
    pub max_block_deviation: f64,
    pub max_probes: usize,
    pub fit: LineFit,
    pub model: ResidualModel,
    pub t2: f64,
    pub stolen_records: Vec<TriangleRecord>,
    pub null_records: Vec<TriangleRecord>,
    /// Individual-test detection rate over the stolen images.
    pub p_d: f64,
    pub max_statistic: f64,
    /// Pooled-test detection rate per `N / N_c` ratio.
    pub pooled_p_d: Vec<f64>,
}

impl ForgeryOutcome {
    pub fn null_flags(&self) -> usize {
        self.null_records.iter().filter(|r| r.statistic > self.t2).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub spec: CellSpec,
    pub options: CellOptions,
    pub outcomes: Vec<ForgeryOutcome>,
}

impl CellResult {
    /// Fraction of forgeries the detector attributes to the owner.
    pub fn p_fa(&self) -> f64 {
        self.outcomes.iter().filter(|o| o.identified).count() as f64 / self.outcomes.len() as f64
    }

    /// Mean individual-test detection rate over stolen images.
    pub fn p_d(&self) -> f64 {
        mean(&self.outcomes.iter().map(|o| o.p_d).collect::<Vec<_>>())
    }

    pub fn pooled_p_d(&self) -> Vec<f64> {
        let ratios = self.options.pooled.as_ref().map_or(0, |p| p.ratios.len());
        (0..ratios)
            .map(|i| mean(&self.outcomes.iter().map(|o| o.pooled_p_d[i]).collect::<Vec<_>>()))
            .collect()
    }

    pub fn mean_rho(&self) -> f64 {
        mean(&self.outcomes.iter().map(|o| o.rho).collect::<Vec<_>>())
    }

    pub fn mean_psnr(&self) -> f64 {
        mean(&self.outcomes.iter().map(|o| o.overall_psnr).collect::<Vec<_>>())
    }

    pub fn max_statistic(&self) -> f64 {
        self.outcomes
            .iter()
            .map(|o| o.max_statistic)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn null_flag_rate(&self) -> (usize, usize) {
        let flags = self.outcomes.iter().map(|o| o.null_flags()).sum();
        let total = self.outcomes.iter().map(|o| o.null_records.len()).sum();
        (flags, total)
    }
}

/// Number of extra unused candidates the pooled grid needs for `n` stolen.
fn pooled_extra(n: usize, pooled: &PooledOptions) -> usize {
    pooled
        .ratios
        .iter()
        .map(|&r| candidates_for_ratio(n, r) - n)
        .max()
        .unwrap_or(0)
}

/// `N_c` for a given `N / N_c` ratio.
pub fn candidates_for_ratio(n: usize, ratio: f64) -> usize {
    ((n as f64 / ratio).round() as usize).max(n)
}

fn records_against(
    world: &World,
    forgery: &TriangleSubject,
    fit: &LineFit,
    indices: &[usize],
) -> Result<Vec<TriangleRecord>> {
    indices
        .iter()
        .map(|&i| {
            let t = world.pool_subjects[i].correlations(forgery)?;
            Ok(TriangleRecord::new(i, t.c_true, estimate_c(t.c_ik, t.c_jk), fit))
        })
        .collect()
}

fn evaluate_forgery(world: &World, spec: &CellSpec, opts: &CellOptions, index: usize) -> Result<ForgeryOutcome> {
    let extra = opts
        .null_candidates
        .max(opts.pooled.as_ref().map_or(0, |p| pooled_extra(spec.n, p)));
    let roles = world.draw_roles(index as u64, spec.n, opts.fit_count)?;
    if roles.unused.len() < extra {
        return Err(invalid(
            "alice_pool",
            format!(
                "pool of {} cannot supply N={} + {} fitting + {extra} unused candidates",
                world.pool.len(),
                spec.n,
                opts.fit_count
            ),
        ));
    }
    let target_index = index % world.targets.len();
    let attack_seed = derive_path(world.seed, &[TAG_ATTACK, index as u64]);
    let stolen = world.stolen_set(&roles.stolen)?;
    let forgery = world.forge(spec.method, &world.targets[target_index], &stolen, spec.a, attack_seed)?;

    let fitting = roles
        .fitting
        .iter()
        .map(|&i| world.pool_subjects[i].correlations(&forgery.subject))
        .collect::<Result<Vec<_>>>()?;
    let (fit, model) = fit_null(&fitting)?;
    let t2 = individual_threshold(&model, opts.triangle_pfa)?;
    let stolen_records = records_against(world, &forgery.subject, &fit, &roles.stolen)?;
    let null_records = records_against(world, &forgery.subject, &fit, &roles.unused[..extra])?;

    let flagged = stolen_records.iter().filter(|r| r.statistic > t2).count();
    let pooled_p_d = match &opts.pooled {
        None => Vec::new(),
        Some(pooled) => pooled
            .ratios
            .iter()
            .enumerate()
            .map(|(ri, &ratio)| {
                let n_c = candidates_for_ratio(spec.n, ratio);
                let stats: Vec<f64> = stolen_records
                    .iter()
                    .chain(&null_records[..n_c - spec.n])
                    .map(|r| r.statistic)
                    .collect();
                let seed = derive_path(world.seed, &[TAG_POOLED, index as u64, ri as u64]);
                pooled_detection_rate(&stats, pooled.k.min(stats.len()), pooled.repetitions, &model, opts.triangle_pfa, seed)
            })
            .collect::<Result<Vec<_>>>()?,
    };

    let rec = &forgery.record;
    let max_block_deviation = rec
        .per_block_psnr
        .iter()
        .zip(&rec.per_block_status)
        .filter(|(_, s)| **s == BlockStatus::OnTarget)
        .map(|(p, _)| (p - spec.a).abs())
        .fold(0.0, f64::max);
    Ok(ForgeryOutcome {
        forgery: index,
        target: target_index,
        attack_seed,
        rho: forgery.rho,
        identified: world.detector.decide(forgery.rho),
        overall_psnr: rec.overall_psnr,
        blocks: rec.blocks.len(),
        flagged_blocks: rec.flagged_blocks(),
        max_block_deviation,
        max_probes: rec.per_block_probes.iter().copied().max().unwrap_or(0),
        fit,
        model,
        t2,
        p_d: flagged as f64 / stolen_records.len() as f64,
        max_statistic: stolen_records
            .iter()
            .map(|r| r.statistic)
            .fold(f64::NEG_INFINITY, f64::max),
        stolen_records,
        null_records,
        pooled_p_d,
    })
}

/// Forges `opts.forgeries` targets under `spec` and evaluates each one
/// against the detector, the individual test and (optionally) the pooled
/// test. Forgery `i` always uses the same stolen set and attack seed for a
/// given `N`, regardless of method, so methods are compared on equal terms.
pub fn run_cell(world: &World, spec: CellSpec, opts: &CellOptions) -> Result<CellResult> {
    if opts.forgeries == 0 {
        return Err(invalid("forgeries", "must be positive"));
    }
    let outcomes = (0..opts.forgeries)
        .into_par_iter()
        .map(|i| evaluate_forgery(world, &spec, opts, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(CellResult {
        spec,
        options: opts.clone(),
        outcomes,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiCellResult {
    pub spec: CellSpec,
    pub forgeries: usize,
    pub fit_count: usize,
    pub pfa: f64,
    pub detection_rate: Vec<f64>,
    pub mean_p_d: f64,
    pub p_fa: f64,
}

/// Multiple-forgeries protocol: the forger steals one set of `N` images and
/// forges `forgeries` different targets with it. Block forgeries each use a
/// fresh attack seed; conventional forgeries share the one fake fingerprint.
pub fn run_multi_cell(world: &World, spec: CellSpec, forgeries: usize, fit_count: usize, pfa: f64) -> Result<MultiCellResult> {
    if forgeries < 2 {
        return Err(invalid("forgeries", "the multiple-forgeries test needs at least 2"));
    }
    let roles = world.draw_roles(derive_path(TAG_MULTI, &[spec.n as u64]), spec.n, fit_count)?;
    let stolen = world.stolen_set(&roles.stolen)?;
    let forged = (0..forgeries)
        .into_par_iter()
        .map(|i| {
            let seed = derive_path(world.seed, &[TAG_MULTI, i as u64]);
            world.forge(spec.method, &world.targets[i % world.targets.len()], &stolen, spec.a, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let identified = forged.iter().filter(|f| world.detector.decide(f.rho)).count();
    let subjects: Vec<TriangleSubject> = forged.into_iter().map(|f| f.subject).collect();
    let unused: Vec<TriangleSubject> = roles.fitting.iter().map(|&i| world.pool_subjects[i].clone()).collect();
    let outcome = multiple_forgeries_test_prepared(&subjects, &unused, pfa)?;
    Ok(MultiCellResult {
        spec,
        forgeries,
        fit_count,
        pfa,
        mean_p_d: outcome.mean_detection_rate(),
        detection_rate: outcome.detection_rate,
        p_fa: identified as f64 / forgeries as f64,
    })
}

/// Pooled test under the null: random `k`-subsets of never-used candidate
/// statistics, pooled against each forgery's own model. Returns the
/// fraction of subsets with `p < alpha`.
pub fn pooled_null_rate(cell: &CellResult, k: usize, subsets: usize, alpha: f64) -> Result<f64> {
    let mut hits = 0usize;
    let mut total = 0usize;
    let per = subsets.div_ceil(cell.outcomes.len());
    for o in &cell.outcomes {
        if o.null_records.len() < k {
            return Err(invalid("null_candidates", format!("need at least k={k}")));
        }
        let stats: Vec<f64> = o.null_records.iter().map(|r| r.statistic).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_path(o.attack_seed, &[TAG_NULL_POOLED]));
        for _ in 0..per {
            let subset: Vec<f64> = rand::seq::index::sample(&mut rng, stats.len(), k)
                .iter()
                .map(|i| stats[i])
                .collect();
            if pooled_test(&subset, &o.model, 0.5)?.p_value < alpha {
                hits += 1;
            }
            total += 1;
        }
    }
    Ok(hits as f64 / total as f64)
}
