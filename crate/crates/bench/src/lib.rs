//! Shared fixtures for the benchmarks.

use irisdeform::synth::{render_iris, IrisTexture};
use irisdeform::{GrayImage, IrisCircles, IrisMask};

/// A 256x256 synthetic eye with a centered iris of radius 100.
pub fn eye(seed: u64, pupil_r: f64) -> (GrayImage, IrisMask, IrisCircles) {
    let c = IrisCircles::concentric(128.0, 128.0, pupil_r, 100.0).expect("valid circles");
    let (img, mask) = render_iris(&IrisTexture::random(seed), &c, 256, 256, |u| u).expect("render");
    (img, mask, c)
}
