//! Procedural iris images with known geometry.
//!
//! Textures are defined in material coordinates (blend parameter `u` of the
//! undeformed eye, angle `theta`), so the same eye can be rendered at any
//! pupil size under any radial law.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::geometry::IrisCircles;
use crate::raster::{quantize, GrayImage, IrisMask};

const PUPIL_LEVEL: f64 = 12.0;
const SCLERA_LEVEL: f64 = 190.0;

#[derive(Debug, Clone, Copy)]
struct Wave {
    amplitude: f64,
    radial_cycles: f64,
    angular_cycles: f64,
    phase: f64,
}

/// Band-limited random texture: a sum of plane waves in `(u, theta)` with
/// integer angular frequency, so it is periodic in angle.
#[derive(Debug, Clone)]
pub struct IrisTexture {
    waves: Vec<Wave>,
    scale: f64,
}

impl IrisTexture {
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let waves: Vec<Wave> = (0..24)
            .map(|_| Wave {
                amplitude: rng.gen_range(0.3..1.0),
                radial_cycles: rng.gen_range(0.5..5.0),
                angular_cycles: f64::from(rng.gen_range(2..36))
                    * if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
                phase: rng.gen_range(0.0..TAU),
            })
            .collect();
        // standard deviation of the summed waves is about 0.15
        let power: f64 = waves.iter().map(|w| w.amplitude * w.amplitude / 2.0).sum();
        let scale = 0.15 / power.sqrt();
        Self { waves, scale }
    }

    /// Intensity in `[0, 1]` at material position `(u, theta)`.
    pub fn value(&self, u: f64, theta: f64) -> f64 {
        let s: f64 = self
            .waves
            .iter()
            .map(|w| {
                w.amplitude * (TAU * w.radial_cycles * u + w.angular_cycles * theta + w.phase).cos()
            })
            .sum();
        (0.5 + self.scale * s).clamp(0.02, 0.98)
    }
}

/// Renders `tex` on the annulus of `c`. `material_u` maps the blend
/// parameter of each pixel to the material coordinate it shows; the identity
/// map renders the undeformed eye. Returns the image and its iris mask.
pub fn render_iris(
    tex: &IrisTexture,
    c: &IrisCircles,
    width: usize,
    height: usize,
    material_u: impl Fn(f64) -> f64,
) -> Result<(GrayImage, IrisMask)> {
    c.ensure_nested()?;
    let mut values = vec![SCLERA_LEVEL; width * height];
    let mut bits = vec![false; width * height];
    for y in 0..height {
        for x in 0..width {
            let (xf, yf) = (x as f64, y as f64);
            let idx = y * width + x;
            if c.pupil.contains(xf, yf) {
                values[idx] = PUPIL_LEVEL;
            } else if c.iris.contains(xf, yf) {
                if let Some((u, theta)) = c.polar(xf, yf) {
                    values[idx] = 255.0 * tex.value(material_u(u.clamp(0.0, 1.0)), theta);
                    bits[idx] = true;
                }
            }
        }
    }
    let pixels = values.iter().map(|&v| quantize(v)).collect();
    Ok((
        GrayImage::from_raw(width, height, pixels)?,
        IrisMask::from_bits(width, height, bits)?,
    ))
}

/// Turns the elliptical region with semi-axes `a` (along x) and `b` (along
/// y) centered at `(cx, cy)` into pupil: dark pixels, cleared mask bits.
pub fn carve_pupil_ellipse(
    img: &mut GrayImage,
    mask: &mut IrisMask,
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
) {
    for y in 0..img.height() {
        for x in 0..img.width() {
            let (dx, dy) = ((x as f64 - cx) / a, (y as f64 - cy) / b);
            if dx * dx + dy * dy <= 1.0 {
                img.set(x, y, PUPIL_LEVEL as u8);
                mask.set(x, y, false);
            }
        }
    }
}
