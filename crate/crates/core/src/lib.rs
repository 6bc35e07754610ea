//! PRNU camera identification and fingerprint-copy anti-forensics.
//!
//! * [`denoise`] / [`wavelet`]: wavelet Wiener filter and noise residuals.
//! * [`fingerprint`]: fingerprint estimation, the correlation detector and
//!   threshold calibration.
//! * [`attack`]: conventional and block-wise randomized fingerprint-copy
//!   attacks with PSNR-controlled strength.
//! * [`triangle`]: individual, pooled and multiple-forgeries triangle tests.
//! * [`sim`]: synthetic cameras with ground-truth PRNU.
//! * [`experiment`]: Monte-Carlo protocols tying it all together.

// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attack;
pub mod denoise;
pub mod error;
pub mod experiment;
pub mod fingerprint;
pub mod image;
pub mod io;
pub mod seed;
pub mod sim;
pub mod stats;
pub mod triangle;
pub mod wavelet;

/// Version stamped into every JSON document the toolkit writes.
pub const SCHEMA_VERSION: u32 = 1;

pub use attack::{block_attack, conventional_attack, find_strength, superimpose, AttackParams, ForgeryRecord, StolenSet};
pub use denoise::{denoise, residual, DenoiseParams};
pub use error::{Error, Result};
pub use fingerprint::{calibrate_threshold, correlation, detect, estimate_fingerprint, DetectorModel, Fingerprint};
pub use image::{psnr, round_truncate, Block, BlockGrid, ImagePlane, RasterF32};
pub use io::{load_image, load_raster, save_pgm, save_raster};
pub use sim::{capture, make_bench, BenchConfig, Manifest, Role, SceneKind, SceneSpec, SyntheticCamera};
pub use triangle::{
    estimate_c, fit_line, fit_pdf, individual_test, multiple_forgeries_test, pooled_test, triangle_correlations, LineFit,
    ResidualModel, TriangleRecord,
};
