//! Fixtures shared by the criterion benches.

use gpo_core::synth::{generate_scene, GroundTruth, SceneConfig};
use gpo_core::FrameWindow;

/// Noisy orbit scene with 100 plane points, as used for the timing table.
pub fn timing_scene(frames: usize, seed: u64) -> (FrameWindow, GroundTruth) {
    generate_scene(&SceneConfig {
        frames,
        noise_px: 1.0,
        seed,
        ..SceneConfig::default()
    })
    .expect("default scene is valid")
}
