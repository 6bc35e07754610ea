//! TOML experiment configuration. Every field has a default, so an empty
//! file (or no file) is valid; command-line flags override file values.

use std::path::{Path, PathBuf};

use prnu_core::attack::{PSNR_ACCEPTED, PSNR_TYPICAL};
use prnu_core::experiment::Method;
use prnu_core::sim::BenchConfig;
use prnu_core::DenoiseParams;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Dataset manifest written by `simulate`.
    pub manifest: Option<PathBuf>,
    pub output: PathBuf,
    /// Root seed for every random choice of an experiment.
    pub seed: u64,
    pub dataset: DatasetSection,
    pub detector: DetectorSection,
    pub attack: AttackSection,
    pub triangle: TriangleSection,
    pub pooled: PooledSection,
    pub bench: BenchSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            output: PathBuf::from("out"),
            seed: 1,
            dataset: DatasetSection::default(),
            detector: DetectorSection::default(),
            attack: AttackSection::default(),
            triangle: TriangleSection::default(),
            pooled: PooledSection::default(),
            bench: BenchSection::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// 128x128 planes with the default sensor model.
    Desk,
    /// 256x256 planes tuned for the attack experiments.
    Attack,
}

/// Simulated dataset: a preset plus per-field overrides. Without a preset,
/// `simulate` uses `desk` and `bench` uses `attack`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSection {
    pub preset: Option<Preset>,
    #[serde(flatten)]
    pub overrides: toml::Table,
}

impl DatasetSection {
    pub fn bench_config(&self, seed: u64, fallback: Preset) -> Result<BenchConfig, CliError> {
        let base = match self.preset.unwrap_or(fallback) {
            Preset::Desk => BenchConfig::default(),
            Preset::Attack => BenchConfig::attack_desk(),
        };
        let mut value = toml::Table::try_from(&base).map_err(|e| CliError::config("dataset", e.to_string()))?;
        value.insert("seed".into(), toml::Value::Integer(seed as i64));
        merge(&mut value, &self.overrides);
        let cfg: BenchConfig = toml::Value::Table(value)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::config("dataset", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn merge(base: &mut toml::Table, over: &toml::Table) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    /// False-alarm rate the identification threshold is calibrated to.
    pub pfa: f64,
    /// Noise level of the residual-extraction denoiser.
    pub sigma: f64,
}

impl Default for DetectorSection {
    fn default() -> Self {
        Self { pfa: 1e-2, sigma: 5.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Conventional,
    Block,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSection {
    pub method: MethodKind,
    /// Stolen images.
    pub n: usize,
    /// Images per block subset.
    pub r: usize,
    /// Block side in pixels.
    pub l: usize,
    /// Target PSNR in dB.
    pub a: f64,
    pub predenoise_sigma: f64,
    /// How many target images `attack` forges.
    pub targets: usize,
}

impl Default for AttackSection {
    fn default() -> Self {
        Self {
            method: MethodKind::Block,
            n: 60,
            r: 10,
            l: 32,
            a: 50.0,
            predenoise_sigma: 1.0,
            targets: 1,
        }
    }
}

impl AttackSection {
    pub fn method(&self) -> Method {
        match self.method {
            MethodKind::Conventional => Method::Conventional,
            MethodKind::Block => Method::Block { l: self.l, r: self.r },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TriangleSection {
    pub pfa: f64,
    /// Known-unused images fitting each forgery's null model.
    pub fit_count: usize,
    pub forgeries: usize,
    /// Never-used candidates scored per forgery for null calibration.
    pub null_candidates: usize,
}

impl Default for TriangleSection {
    fn default() -> Self {
        Self {
            pfa: 1e-3,
            fit_count: 100,
            forgeries: 20,
            null_candidates: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PooledSection {
    pub k: usize,
    pub repetitions: usize,
    /// `N / N_c` grid.
    pub ratios: Vec<f64>,
}

impl Default for PooledSection {
    fn default() -> Self {
        Self {
            k: 20,
            repetitions: 10_000,
            ratios: vec![0.25, 0.5, 1.0],
        }
    }
}

/// Grids swept by `bench`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub a: Vec<f64>,
    pub r: Vec<usize>,
    pub n: Vec<usize>,
    /// Block side for the grid cells.
    pub l: usize,
    pub l_sweep: Vec<usize>,
    /// `N` and `A` of the pooled, multiple-forgeries and l-sweep runs.
    pub focus_n: usize,
    pub focus_a: f64,
    pub multi_forgeries: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            a: vec![50.0, 55.0],
            r: vec![10, 15],
            n: vec![20, 60, 120],
            l: 32,
            l_sweep: vec![8, 16, 32, 64, 128, 256],
            focus_n: 60,
            focus_a: 50.0,
            multi_forgeries: 20,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config("--config", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| {
            let key = e
                .message()
                .split('`')
                .nth(1)
                .map(str::to_string)
                .unwrap_or_else(|| "config".into());
            CliError::config(key, e.to_string())
        })
    }

    pub fn denoise(&self) -> DenoiseParams {
        DenoiseParams::with_sigma(self.detector.sigma)
    }

    pub fn manifest(&self) -> Result<&Path, CliError> {
        self.manifest
            .as_deref()
            .ok_or_else(|| CliError::config("manifest", "no dataset manifest given"))
    }

    /// Checks everything that does not need the dataset.
    pub fn validate(&self) -> Result<(), CliError> {
        check_probability("detector.pfa", self.detector.pfa)?;
        check_probability("triangle.pfa", self.triangle.pfa)?;
        if !(self.detector.sigma > 0.0 && self.detector.sigma.is_finite()) {
            return Err(CliError::config("detector.sigma", "must be positive"));
        }
        let at = &self.attack;
        if at.n == 0 {
            return Err(CliError::config("attack.n", "at least one image must be stolen"));
        }
        if at.method == MethodKind::Block {
            check_block("attack", at.l, at.r, at.n)?;
        }
        check_psnr("attack.a", at.a)?;
        if !(at.predenoise_sigma > 0.0 && at.predenoise_sigma.is_finite()) {
            return Err(CliError::config("attack.predenoise_sigma", "must be positive"));
        }
        if self.triangle.fit_count < 3 {
            return Err(CliError::config("triangle.fit_count", "at least 3 images are needed for a line fit"));
        }
        if self.triangle.forgeries == 0 {
            return Err(CliError::config("triangle.forgeries", "must be positive"));
        }
        if self.pooled.k < 2 {
            return Err(CliError::config("pooled.k", "at least 2 candidates per subset"));
        }
        if self.pooled.repetitions == 0 {
            return Err(CliError::config("pooled.repetitions", "must be positive"));
        }
        if self.pooled.ratios.is_empty() || self.pooled.ratios.iter().any(|&x| !(x > 0.0 && x <= 1.0)) {
            return Err(CliError::config("pooled.ratios", "ratios N/N_c must lie in (0, 1]"));
        }
        let b = &self.bench;
        for &a in &b.a {
            check_psnr("bench.a", a)?;
        }
        check_psnr("bench.focus_a", b.focus_a)?;
        for &n in &b.n {
            for &r in &b.r {
                check_block("bench", b.l, r, n)?;
            }
        }
        for &l in &b.l_sweep {
            check_block("bench", l, self.attack.r, b.focus_n)?;
        }
        if b.multi_forgeries < 2 {
            return Err(CliError::config("bench.multi_forgeries", "at least 2 forgeries are needed"));
        }
        Ok(())
    }
}

fn check_probability(key: &str, p: f64) -> Result<(), CliError> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(CliError::config(key, format!("{p} is outside (0, 1)")))
    }
}

fn check_block(section: &str, l: usize, r: usize, n: usize) -> Result<(), CliError> {
    if l < 8 {
        return Err(CliError::config(format!("{section}.l"), format!("block side {l} is below 8")));
    }
    if r == 0 || r > n {
        return Err(CliError::config(format!("{section}.r"), format!("r={r} must lie in 1..=N (N={n})")));
    }
    Ok(())
}

fn check_psnr(key: &str, a: f64) -> Result<(), CliError> {
    if !(a >= PSNR_ACCEPTED.0 && a <= PSNR_ACCEPTED.1) {
        return Err(CliError::config(
            key,
            format!("{a} dB is outside [{}, {}]", PSNR_ACCEPTED.0, PSNR_ACCEPTED.1),
        ));
    }
    if a < PSNR_TYPICAL.0 || a > PSNR_TYPICAL.1 {
        log::warn!("{key} = {a} dB is outside the typical band [{}, {}]", PSNR_TYPICAL.0, PSNR_TYPICAL.1);
    }
    Ok(())
}
