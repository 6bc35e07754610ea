//! Synthetic cameras with known PRNU, scene generators, and on-disk bench
//! datasets.
//!
//! A capture follows the multiplicative sensor model
//! `I = [I0 (1 + K) + theta]` where `K` is the camera's PRNU and `theta`
//! is read noise plus optional signal-dependent shot noise.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_same_dims, invalid, Error, Result};
use crate::image::{quantize, ImagePlane, RasterF32};
use crate::io::{load_image, save_pgm, save_raster};
use crate::seed::derive_seed;

#[derive(Clone, Debug)]
pub struct SyntheticCamera {
    prnu: RasterF32,
    pub read_noise_sd: f64,
    /// Per-capture read noise is `read_noise_sd * spread^u` with `u`
    /// uniform in `[0, 1]`, mimicking varying ISO. `1` disables it.
    pub read_noise_spread: f64,
    pub shot_noise_gain: f64,
    pub seed: u64,
}

impl SyntheticCamera {
    /// Draws an i.i.d. Gaussian PRNU pattern with standard deviation `sigma_k`.
    pub fn new(
        width: usize,
        height: usize,
        sigma_k: f64,
        read_noise_sd: f64,
        shot_noise_gain: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(sigma_k > 0.0 && sigma_k <= 0.1) {
            return Err(invalid("sigma_k", format!("{sigma_k} outside (0, 0.1]")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, sigma_k).expect("validated sd");
        let k: Vec<f32> = (0..width * height)
            .map(|_| normal.sample(&mut rng) as f32)
            .collect();
        Self::with_prnu(RasterF32::new(width, height, k)?, read_noise_sd, shot_noise_gain, seed)
    }

    pub fn with_prnu(prnu: RasterF32, read_noise_sd: f64, shot_noise_gain: f64, seed: u64) -> Result<Self> {
        if !(read_noise_sd >= 0.0) || !(shot_noise_gain >= 0.0) {
            return Err(invalid("noise", "noise levels must be non-negative"));
        }
        Ok(Self {
            prnu,
            read_noise_sd,
            read_noise_spread: 1.0,
            shot_noise_gain,
            seed,
        })
    }

    pub fn with_read_noise_spread(mut self, spread: f64) -> Result<Self> {
        if !(spread >= 1.0 && spread.is_finite()) {
            return Err(invalid("read_noise_spread", format!("{spread} must be finite and >= 1")));
        }
        self.read_noise_spread = spread;
        Ok(self)
    }

    /// The true PRNU. Only oracle code should look at this.
    pub fn prnu(&self) -> &RasterF32 {
        &self.prnu
    }

    pub fn dims(&self) -> (usize, usize) {
        self.prnu.dims()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SceneKind {
    /// Uniform illumination, like an overcast sky.
    FlatField { level: f64 },
    /// Linear ramp in a random direction.
    Gradient,
    /// Multi-octave value noise over a gentle gradient; the texture
    /// amplitude is drawn log-uniformly from `contrast`.
    Textured { octaves: u32, contrast: [f64; 2] },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub kind: SceneKind,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Bilinear value noise on a lattice with `cell` pixel spacing.
fn value_noise(width: usize, height: usize, cell: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (gw, gh) = (width / cell + 2, height / cell + 2);
    let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        let (gy, fy) = (y / cell, smoothstep((y % cell) as f64 / cell as f64));
        for x in 0..width {
            let (gx, fx) = (x / cell, smoothstep((x % cell) as f64 / cell as f64));
            let at = |i: usize, j: usize| lattice[j * gw + i];
            let top = at(gx, gy) * (1.0 - fx) + at(gx + 1, gy) * fx;
            let bottom = at(gx, gy + 1) * (1.0 - fx) + at(gx + 1, gy + 1) * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

fn ramp(width: usize, height: usize, from: f64, to: f64, angle: f64) -> Vec<f64> {
    let (dx, dy) = (angle.cos(), angle.sin());
    let span = (width as f64 * dx.abs() + height as f64 * dy.abs()).max(1.0);
    let origin = |v: f64, d: f64, len: usize| if d < 0.0 { v - (len as f64) * d } else { v };
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let t = (origin(x as f64 * dx, dx, width) + origin(y as f64 * dy, dy, height)) / span;
            out.push(from + (to - from) * t);
        }
    }
    out
}

impl SceneSpec {
    /// Noise-free scene radiance `I0`, in `[0, 255]`.
    pub fn render(&self) -> Vec<f64> {
        let (w, h) = (self.width, self.height);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        match self.kind {
            SceneKind::FlatField { level } => vec![level.clamp(0.0, 255.0); w * h],
            SceneKind::Gradient => {
                let a = rng.random_range(40.0..120.0);
                let b = rng.random_range(140.0..220.0);
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                ramp(w, h, a, b, angle)
            }
            SceneKind::Textured { octaves, contrast: [lo, hi] } => {
                let base = rng.random_range(90.0..160.0);
                let tilt = rng.random_range(-30.0..30.0);
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                let contrast = lo * (hi / lo).powf(rng.random_range(0.0..=1.0));
                let mut img = ramp(w, h, base - tilt, base + tilt, angle);
                let mut cell = (w.max(h) / 2).max(2);
                let mut amp = 1.0;
                for _ in 0..octaves {
                    let layer = value_noise(w, h, cell, &mut rng);
                    img.iter_mut()
                        .zip(&layer)
                        .for_each(|(p, v)| *p += contrast * amp * v);
                    cell = (cell / 2).max(1);
                    amp *= 0.6;
                }
                img.iter_mut().for_each(|p| *p = p.clamp(0.0, 255.0));
                img
            }
        }
    }
}

/// Simulates a capture of `scene` by `cam`. Deterministic in
/// `(cam.seed, scene.seed)`.
pub fn capture(cam: &SyntheticCamera, scene: &SceneSpec) -> Result<ImagePlane> {
    ensure_same_dims(cam.dims(), (scene.width, scene.height))?;
    let radiance = scene.render();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cam.seed, scene.seed));
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let read_sd = if cam.read_noise_spread > 1.0 {
        cam.read_noise_sd * cam.read_noise_spread.powf(rng.random_range(0.0..=1.0))
    } else {
        cam.read_noise_sd
    };
    let samples = radiance
        .iter()
        .zip(cam.prnu.samples())
        .map(|(&i0, &k)| {
            let mut v = i0 * (1.0 + f64::from(k));
            if read_sd > 0.0 {
                v += read_sd * std_normal.sample(&mut rng);
            }
            if cam.shot_noise_gain > 0.0 {
                v += cam.shot_noise_gain * i0.max(0.0).sqrt() * std_normal.sample(&mut rng);
            }
            quantize(v)
        })
        .collect();
    ImagePlane::new(scene.width, scene.height, samples)
}

/// Role of a dataset file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Owner's natural images: the pool thieves steal from and the triangle
    /// test draws candidates from.
    AlicePool,
    /// Owner's flat-field captures for the reference fingerprint.
    AliceFlat,
    /// Images from unrelated cameras for detector calibration.
    Negative,
    /// The forger's own images to be forged.
    EveTarget,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::AlicePool, Role::AliceFlat, Role::Negative, Role::EveTarget];

    pub fn as_str(&self) -> &'static str {
        match self {
            Role::AlicePool => "alice_pool",
            Role::AliceFlat => "alice_flat",
            Role::Negative => "negative",
            Role::EveTarget => "eve_target",
        }
    }
}

/// Parameters of one simulated sensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    pub sigma_k: f64,
    pub read_noise_sd: f64,
    #[serde(default = "unit_spread")]
    pub read_noise_spread: f64,
    pub shot_noise_gain: f64,
}

fn unit_spread() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub width: usize,
    pub height: usize,
    pub alice_pool: usize,
    pub flat_field: usize,
    pub negatives: usize,
    pub targets: usize,
    pub negative_cameras: usize,
    pub eve_cameras: usize,
    pub flat_level: f64,
    pub octaves: u32,
    /// Range of the texture amplitude of natural scenes, in gray levels.
    pub contrast: [f64; 2],
    pub alice: SensorConfig,
    pub eve: SensorConfig,
    pub other: SensorConfig,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            alice_pool: 160,
            flat_field: 40,
            negatives: 200,
            targets: 30,
            negative_cameras: 5,
            eve_cameras: 1,
            flat_level: 128.0,
            octaves: 5,
            contrast: [35.0, 60.0],
            alice: SensorConfig {
                sigma_k: 0.02,
                read_noise_sd: 2.0,
                read_noise_spread: 1.0,
                shot_noise_gain: 0.0,
            },
            eve: SensorConfig {
                sigma_k: 0.02,
                read_noise_sd: 2.0,
                read_noise_spread: 1.0,
                shot_noise_gain: 0.0,
            },
            other: SensorConfig {
                sigma_k: 0.02,
                read_noise_sd: 2.0,
                read_noise_spread: 1.0,
                shot_noise_gain: 0.0,
            },
            seed: 1,
        }
    }
}

impl BenchConfig {
    /// Larger, noisier bench for the attack and triangle-test experiments.
    /// The stolen images' non-PRNU residual must dominate the fake
    /// fingerprints, and forgeries must land near the detector threshold,
    /// for the attacks to behave as they do on real photographs.
    pub fn attack_desk() -> Self {
        Self {
            width: 256,
            height: 256,
            alice_pool: 400,
            alice: SensorConfig {
                sigma_k: 0.005,
                read_noise_sd: 8.0,
                read_noise_spread: 1.0,
                shot_noise_gain: 0.0,
            },
            eve: SensorConfig {
                sigma_k: 0.002,
                read_noise_sd: 2.0,
                read_noise_spread: 4.0,
                shot_noise_gain: 0.0,
            },
            ..Self::default()
        }
    }

    pub fn total_files(&self) -> usize {
        self.alice_pool + self.flat_field + self.negatives + self.targets
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 16 || self.height < 16 {
            return Err(invalid("width/height", "bench images must be at least 16x16"));
        }
        if !(self.contrast[0] > 0.0 && self.contrast[0] <= self.contrast[1] && self.contrast[1].is_finite()) {
            return Err(invalid("contrast", "need 0 < low <= high"));
        }
        if self.negatives > 0 && self.negative_cameras == 0 {
            return Err(invalid("negative_cameras", "negatives need at least one camera"));
        }
        if self.targets > 0 && self.eve_cameras == 0 {
            return Err(invalid("eve_cameras", "targets need at least one camera"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraEntry {
    pub camera_id: String,
    pub sigma_k: f64,
    pub read_noise_sd: f64,
    #[serde(default = "unit_spread")]
    pub read_noise_spread: f64,
    pub shot_noise_gain: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub camera_id: String,
    pub role: Role,
    /// Relative to the manifest's directory.
    pub path: PathBuf,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleEntry {
    pub camera_id: String,
    pub path: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub cameras: Vec<CameraEntry>,
    pub files: Vec<ManifestEntry>,
    /// True PRNU rasters, for oracle checks only.
    pub oracle: Vec<OracleEntry>,
}

impl Manifest {
    pub fn entries(&self, role: Role) -> impl Iterator<Item = &ManifestEntry> {
        self.files.iter().filter(move |e| e.role == role)
    }

    pub fn count(&self, role: Role) -> usize {
        self.entries(role).count()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::UnreadableFile {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    /// Loads every image of `role`, with paths relative to `dir`. Images
    /// must match the manifest's dimensions.
    pub fn load_images(&self, dir: impl AsRef<Path>, role: Role) -> Result<Vec<ImagePlane>> {
        let dir = dir.as_ref();
        let entries: Vec<&ManifestEntry> = self.entries(role).collect();
        entries
            .par_iter()
            .map(|e| {
                let img = load_image(dir.join(&e.path))?;
                ensure_same_dims((self.width, self.height), img.dims())?;
                Ok(img)
            })
            .collect()
    }
}

/// A generated bench held in memory.
pub struct BenchData {
    pub manifest: Manifest,
    pub cameras: Vec<(String, SyntheticCamera)>,
    /// Images in manifest order.
    pub images: Vec<ImagePlane>,
}

impl BenchData {
    pub fn images_with_role(&self, role: Role) -> Vec<ImagePlane> {
        self.manifest
            .files
            .iter()
            .zip(&self.images)
            .filter(|(e, _)| e.role == role)
            .map(|(_, img)| img.clone())
            .collect()
    }

    pub fn camera(&self, id: &str) -> Option<&SyntheticCamera> {
        self.cameras.iter().find(|(c, _)| c == id).map(|(_, cam)| cam)
    }
}

fn make_camera(id: String, s: &SensorConfig, cfg: &BenchConfig, seed: u64) -> Result<(CameraEntry, SyntheticCamera)> {
    let cam = SyntheticCamera::new(cfg.width, cfg.height, s.sigma_k, s.read_noise_sd, s.shot_noise_gain, seed)?
        .with_read_noise_spread(s.read_noise_spread)?;
    let entry = CameraEntry {
        camera_id: id,
        sigma_k: s.sigma_k,
        read_noise_sd: s.read_noise_sd,
        read_noise_spread: s.read_noise_spread,
        shot_noise_gain: s.shot_noise_gain,
        seed,
    };
    Ok((entry, cam))
}

/// Generates every camera and image of a bench without touching disk.
pub fn generate_bench(cfg: &BenchConfig) -> Result<BenchData> {
    cfg.validate()?;
    let root = cfg.seed;
    let mut cameras = vec![make_camera("alice".into(), &cfg.alice, cfg, derive_seed(root, 1))?];
    for e in 0..cfg.eve_cameras {
        cameras.push(make_camera(format!("eve-{e}"), &cfg.eve, cfg, derive_seed(root, 100 + e as u64))?);
    }
    for o in 0..cfg.negative_cameras {
        cameras.push(make_camera(format!("other-{o}"), &cfg.other, cfg, derive_seed(root, 1000 + o as u64))?);
    }

    let textured = SceneKind::Textured {
        octaves: cfg.octaves,
        contrast: cfg.contrast,
    };
    let mut plan: Vec<(String, Role, SceneKind)> = Vec::with_capacity(cfg.total_files());
    plan.extend((0..cfg.alice_pool).map(|_| ("alice".to_string(), Role::AlicePool, textured)));
    plan.extend((0..cfg.flat_field).map(|_| {
        (
            "alice".to_string(),
            Role::AliceFlat,
            SceneKind::FlatField { level: cfg.flat_level },
        )
    }));
    plan.extend((0..cfg.negatives).map(|i| (format!("other-{}", i % cfg.negative_cameras.max(1)), Role::Negative, textured)));
    plan.extend((0..cfg.targets).map(|i| (format!("eve-{}", i % cfg.eve_cameras.max(1)), Role::EveTarget, textured)));

    let mut counters = std::collections::HashMap::<Role, usize>::new();
    let files: Vec<ManifestEntry> = plan
        .iter()
        .enumerate()
        .map(|(n, (cam, role, _))| {
            let idx = counters.entry(*role).or_default();
            let entry = ManifestEntry {
                camera_id: cam.clone(),
                role: *role,
                path: PathBuf::from(format!("{}/{}_{:04}.pgm", role.as_str(), role.as_str(), idx)),
                seed: derive_seed(root, 1_000_000 + n as u64),
            };
            *idx += 1;
            entry
        })
        .collect();

    let images = plan
        .par_iter()
        .zip(&files)
        .map(|((cam_id, _, kind), entry)| {
            let cam = &cameras.iter().find(|(e, _)| &e.camera_id == cam_id).expect("planned camera").1;
            let scene = SceneSpec {
                kind: *kind,
                width: cfg.width,
                height: cfg.height,
                seed: entry.seed,
            };
            capture(cam, &scene)
        })
        .collect::<Result<Vec<_>>>()?;

    let manifest = Manifest {
        schema_version: crate::SCHEMA_VERSION,
        width: cfg.width,
        height: cfg.height,
        seed: root,
        oracle: cameras
            .iter()
            .map(|(e, _)| OracleEntry {
                camera_id: e.camera_id.clone(),
                path: PathBuf::from(format!("oracle/{}.prnu", e.camera_id)),
            })
            .collect(),
        cameras: cameras.iter().map(|(e, _)| e.clone()).collect(),
        files,
    };
    Ok(BenchData {
        manifest,
        cameras: cameras.into_iter().map(|(e, c)| (e.camera_id, c)).collect(),
        images,
    })
}

/// Generates a bench and writes it under `dir`: PGM images per role, true
/// PRNU rasters under `oracle/`, and `manifest.json`.
pub fn make_bench(cfg: &BenchConfig, dir: impl AsRef<Path>) -> Result<Manifest> {
    let dir = dir.as_ref();
    let data = generate_bench(cfg)?;
    for role in Role::ALL {
        fs::create_dir_all(dir.join(role.as_str()))?;
    }
    fs::create_dir_all(dir.join("oracle"))?;
    for (entry, img) in data.manifest.files.iter().zip(&data.images) {
        save_pgm(img, dir.join(&entry.path))?;
    }
    for (entry, (_, cam)) in data.manifest.oracle.iter().zip(&data.cameras) {
        save_raster(cam.prnu(), dir.join(&entry.path))?;
    }
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_vec_pretty(&data.manifest)?,
    )?;
    Ok(data.manifest)
}
