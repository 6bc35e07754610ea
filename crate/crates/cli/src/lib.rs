//! `prnu` command-line harness: dataset simulation, fingerprinting,
//! identification, forgery, triangle tests and the full experiment bench.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{ExperimentConfig, MethodKind, Preset};
use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "prnu", version, about = "PRNU fingerprint-copy attack and triangle-test experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset with a manifest.
    Simulate {
        #[command(flatten)]
        o: Overrides,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
    },
    /// Estimate the owner's reference fingerprint from flat-field images.
    Fingerprint {
        #[command(flatten)]
        o: Overrides,
    },
    /// Calibrate the detector threshold and score every dataset image.
    Identify {
        #[command(flatten)]
        o: Overrides,
        /// Reference fingerprint raster; estimated from the manifest if absent.
        #[arg(long)]
        fingerprint: Option<PathBuf>,
    },
    /// Forge target images with a fingerprint-copy attack.
    Attack {
        #[command(flatten)]
        o: Overrides,
    },
    /// Run a triangle test on fresh forgeries.
    Triangle {
        #[command(subcommand)]
        test: TriangleTest,
    },
    /// Run every experiment and write the summary tables.
    Bench {
        #[command(flatten)]
        o: Overrides,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriangleKind {
    Individual,
    Pooled,
    Multi,
}

#[derive(Subcommand, Debug)]
pub enum TriangleTest {
    /// Test each stolen candidate against each forgery.
    Individual {
        #[command(flatten)]
        o: Overrides,
    },
    /// Test random candidate subsets at once.
    Pooled {
        #[command(flatten)]
        o: Overrides,
    },
    /// Test forgeries against each other.
    Multi {
        #[command(flatten)]
        o: Overrides,
    },
}

/// Flags overriding config-file values.
#[derive(Args, Debug, Clone, Default)]
pub struct Overrides {
    /// TOML experiment config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Root seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub method: Option<MethodKind>,
    /// Number of stolen images.
    #[arg(long = "N")]
    pub n: Option<usize>,
    /// Images per block subset.
    #[arg(long)]
    pub r: Option<usize>,
    /// Block side in pixels.
    #[arg(long)]
    pub l: Option<usize>,
    /// Target PSNR in dB.
    #[arg(long = "A")]
    pub a: Option<f64>,
    #[arg(long)]
    pub predenoise_sigma: Option<f64>,
    /// Targets forged by `attack`.
    #[arg(long)]
    pub targets: Option<usize>,
    /// Detector false-alarm rate for the threshold.
    #[arg(long)]
    pub pfa: Option<f64>,
    /// Extraction denoiser noise level.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub triangle_pfa: Option<f64>,
    #[arg(long)]
    pub fit_count: Option<usize>,
    #[arg(long)]
    pub forgeries: Option<usize>,
    #[arg(long)]
    pub null_candidates: Option<usize>,
    /// Pooled-test subset size.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// Comma-separated N/N_c grid.
    #[arg(long, value_delimiter = ',')]
    pub ratios: Option<Vec<f64>>,
}

impl Overrides {
    /// Loads the config file (or defaults) and applies the flags on top.
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = &self.$flag { cfg.$($field).+ = v.clone(); })*
            };
        }
        if let Some(m) = &self.manifest {
            cfg.manifest = Some(m.clone());
        }
        set! {
            out => output,
            seed => seed,
            method => attack.method,
            n => attack.n,
            r => attack.r,
            l => attack.l,
            a => attack.a,
            predenoise_sigma => attack.predenoise_sigma,
            targets => attack.targets,
            pfa => detector.pfa,
            sigma => detector.sigma,
            triangle_pfa => triangle.pfa,
            fit_count => triangle.fit_count,
            forgeries => triangle.forgeries,
            null_candidates => triangle.null_candidates,
            k => pooled.k,
            repetitions => pooled.repetitions,
            ratios => pooled.ratios,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { o, preset } => {
            let mut cfg = o.resolve()?;
            if preset.is_some() {
                cfg.dataset.preset = preset;
            }
            commands::simulate(&cfg)
        }
        Command::Fingerprint { o } => commands::fingerprint(&o.resolve()?),
        Command::Identify { o, fingerprint } => commands::identify(&o.resolve()?, fingerprint.as_deref()),
        Command::Attack { o } => commands::attack(&o.resolve()?),
        Command::Triangle { test } => {
            let (o, kind) = match test {
                TriangleTest::Individual { o } => (o, TriangleKind::Individual),
                TriangleTest::Pooled { o } => (o, TriangleKind::Pooled),
                TriangleTest::Multi { o } => (o, TriangleKind::Multi),
            };
            commands::triangle(&o.resolve()?, kind)
        }
        Command::Bench { o, preset } => {
            let mut cfg = o.resolve()?;
            if preset.is_some() {
                cfg.dataset.preset = preset;
            }
            commands::bench(&cfg)
        }
    }
}

/// Parses `args`, runs the command, and returns the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
