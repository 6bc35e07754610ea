//! Shared fixtures for the kernel benchmarks.

use prnu_core::sim::{capture, SceneKind, SceneSpec, SyntheticCamera};
use prnu_core::ImagePlane;

/// A textured capture of a side x side scene from a fixed camera.
pub fn textured_capture(side: usize, seed: u64) -> ImagePlane {
    let cam = SyntheticCamera::new(side, side, 0.02, 2.0, 0.0, 1).expect("valid camera");
    let scene = SceneSpec {
        kind: SceneKind::Textured {
            octaves: 5,
            contrast: [35.0, 60.0],
        },
        width: side,
        height: side,
        seed,
    };
    capture(&cam, &scene).expect("matching dims")
}

/// `count` textured captures with consecutive scene seeds.
pub fn textured_set(side: usize, count: usize) -> Vec<ImagePlane> {
    (0..count as u64).map(|s| textured_capture(side, s)).collect()
}
