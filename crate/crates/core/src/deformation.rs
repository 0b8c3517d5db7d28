//! Iris texture deformation between pupil configurations.
//!
//! Two geometric models are built in:
//!
//! * **Linear** (rubber sheet): texture at blend parameter `u` stays at `u`
//!   when the pupil changes size.
//! * **Biomechanical**: the iris is treated as an elastic annulus clamped at
//!   the iris root. For a small pupil displacement the radial field is the
//!   Lamé solution `u(r) = a r + b / r` with `u(R) = 0` and `u(r_p) = dr_p`.
//!   Integrating that field along the pupil path gives the finite map
//!   `R^2 - r_t^2 = k (R^2 - r_s^2)`, `k = (R^2 - p_t^2) / (R^2 - p_s^2)`,
//!   which honors both boundary conditions exactly and is strictly monotone
//!   for any pupil change.
//!
//! A third backend forwards the request to an external learned deformer
//! over HTTP.

use std::f64::consts::TAU;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{fit_circles, IrisCircles};
use crate::raster::{quantize, GrayImage, IrisMask};

pub const DEFAULT_ROWS: usize = 64;
pub const DEFAULT_COLS: usize = 512;

/// Rubber-sheet texture block. Row 0 samples the pupil boundary, the last
/// row the iris boundary; column `j` sits at angle `2 pi j / cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedIris {
    rows: usize,
    cols: usize,
    texture: Vec<f64>,
    validity: Vec<bool>,
}

impl NormalizedIris {
    pub fn new(rows: usize, cols: usize, texture: Vec<f64>, validity: Vec<bool>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter(format!(
                "normalized block must be non-empty, got {rows}x{cols}"
            )));
        }
        if texture.len() != rows * cols || validity.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "texture/validity lengths {}/{} for a {rows}x{cols} block",
                texture.len(),
                validity.len()
            )));
        }
        if texture.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParameter(
                "texture values must lie in [0, 1]".into(),
            ));
        }
        Ok(Self {
            rows,
            cols,
            texture,
            validity,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn texture(&self) -> &[f64] {
        &self.texture
    }

    pub fn validity(&self) -> &[bool] {
        &self.validity
    }

    #[inline]
    pub fn texture_at(&self, row: usize, col: usize) -> f64 {
        self.texture[row * self.cols + col]
    }

    #[inline]
    pub fn valid_at(&self, row: usize, col: usize) -> bool {
        self.validity[row * self.cols + col]
    }

    /// Circular shift along the angular axis: column `c` moves to `c + k`.
    pub fn rotated(&self, k: isize) -> Self {
        let cols = self.cols as isize;
        let mut texture = vec![0.0; self.texture.len()];
        let mut validity = vec![false; self.validity.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                let dst = (c as isize + k).rem_euclid(cols) as usize;
                texture[r * self.cols + dst] = self.texture[r * self.cols + c];
                validity[r * self.cols + dst] = self.validity[r * self.cols + c];
            }
        }
        Self {
            rows: self.rows,
            cols: self.cols,
            texture,
            validity,
        }
    }

    /// Bilinear lookup; the angular axis wraps, the radial axis clamps.
    pub fn sample(&self, row: f64, col: f64) -> f64 {
        let (r0, r1, fr) = self.radial_cell(row);
        let (c0, c1, fc) = self.angular_cell(col);
        let top = self.texture_at(r0, c0) * (1.0 - fc) + self.texture_at(r0, c1) * fc;
        let bottom = self.texture_at(r1, c0) * (1.0 - fc) + self.texture_at(r1, c1) * fc;
        top * (1.0 - fr) + bottom * fr
    }

    /// True when any cell of the bilinear support is valid (a one-cell dilation).
    pub fn valid_near(&self, row: f64, col: f64) -> bool {
        let (r0, r1, _) = self.radial_cell(row);
        let (c0, c1, _) = self.angular_cell(col);
        self.valid_at(r0, c0)
            || self.valid_at(r0, c1)
            || self.valid_at(r1, c0)
            || self.valid_at(r1, c1)
    }

    fn radial_cell(&self, row: f64) -> (usize, usize, f64) {
        let rc = row.clamp(0.0, (self.rows - 1) as f64);
        let r0 = rc.floor() as usize;
        let r1 = (r0 + 1).min(self.rows - 1);
        (r0, r1, rc - r0 as f64)
    }

    fn angular_cell(&self, col: f64) -> (usize, usize, f64) {
        let cc = col.rem_euclid(self.cols as f64);
        let c0 = (cc.floor() as usize).min(self.cols - 1);
        let c1 = (c0 + 1) % self.cols;
        (c0, c1, cc - c0 as f64)
    }
}

#[inline]
fn row_to_u(row: usize, rows: usize) -> f64 {
    if rows == 1 {
        0.0
    } else {
        row as f64 / (rows - 1) as f64
    }
}

/// Daugman rubber-sheet unwrapping of the annulus into a `rows x cols` block.
pub fn rubber_sheet_normalize(
    img: &GrayImage,
    mask: &IrisMask,
    c: &IrisCircles,
    rows: usize,
    cols: usize,
) -> Result<NormalizedIris> {
    if !img.same_dims(mask) {
        return Err(Error::DimensionMismatch(format!(
            "image {}x{} vs mask {}x{}",
            img.width(),
            img.height(),
            mask.width(),
            mask.height()
        )));
    }
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidParameter(format!(
            "normalized block must be non-empty, got {rows}x{cols}"
        )));
    }
    c.ensure_nested()?;
    let mut texture = Vec::with_capacity(rows * cols);
    let mut validity = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let u = row_to_u(r, rows);
        for j in 0..cols {
            let theta = TAU * j as f64 / cols as f64;
            let (x, y) = c.blend_point(u, theta);
            texture.push(img.sample_bilinear(x, y) / 255.0);
            validity.push(mask.sample_bilinear(x, y) >= 0.5);
        }
    }
    NormalizedIris::new(rows, cols, texture, validity)
}

/// Maps the block back onto the annulus of `target` in an `out_w x out_h` frame.
pub fn rubber_sheet_denormalize(
    n: &NormalizedIris,
    target: &IrisCircles,
    out_w: usize,
    out_h: usize,
) -> Result<(GrayImage, IrisMask)> {
    denormalize_with(n, target, out_w, out_h, |u| u)
}

/// Denormalization where the target blend parameter `u_t` reads the block at
/// `radial_map(u_t)`.
fn denormalize_with(
    n: &NormalizedIris,
    target: &IrisCircles,
    out_w: usize,
    out_h: usize,
    radial_map: impl Fn(f64) -> f64,
) -> Result<(GrayImage, IrisMask)> {
    target.ensure_nested()?;
    if out_w == 0 || out_h == 0 {
        return Err(Error::InvalidParameter(
            "output frame must be non-empty".into(),
        ));
    }
    let mut pixels = vec![0u8; out_w * out_h];
    let mut bits = vec![false; out_w * out_h];
    let row_scale = (n.rows() - 1) as f64;
    let col_scale = n.cols() as f64 / TAU;
    for y in 0..out_h {
        for x in 0..out_w {
            let (xf, yf) = (x as f64, y as f64);
            if !target.annulus_contains(xf, yf) {
                continue;
            }
            let Some((u, theta)) = target.polar(xf, yf) else {
                continue;
            };
            let src_u = radial_map(u.clamp(0.0, 1.0));
            let (row, col) = (src_u * row_scale, theta * col_scale);
            let idx = y * out_w + x;
            if n.valid_near(row, col) {
                bits[idx] = true;
                pixels[idx] = quantize(255.0 * n.sample(row, col));
            }
        }
    }
    Ok((
        GrayImage::from_raw(out_w, out_h, pixels)?,
        IrisMask::from_bits(out_w, out_h, bits)?,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiomechParams {
    /// Material ratio; the radial field with two displacement boundary
    /// conditions does not depend on it, kept for orthotropic refinements.
    pub nu: f64,
    /// Table size for the forward map used to bracket inversions.
    pub radial_samples: usize,
}

impl Default for BiomechParams {
    fn default() -> Self {
        Self {
            nu: 0.49,
            radial_samples: 512,
        }
    }
}

impl BiomechParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.5).contains(&self.nu) {
            return Err(Error::InvalidParameter(format!(
                "nu {} outside [0, 0.5]",
                self.nu
            )));
        }
        if self.radial_samples < 2 {
            return Err(Error::InvalidParameter(
                "radial_samples must be at least 2".into(),
            ));
        }
        Ok(())
    }
}

/// Radial map in iris-normalized units (iris root at 1) between a source
/// pupil ratio and a target pupil ratio.
#[derive(Debug, Clone)]
pub struct BiomechMap {
    src_ratio: f64,
    tgt_ratio: f64,
    k: f64,
    table: Vec<f64>,
}

const BISECTION_TOL: f64 = 1e-12;

impl BiomechMap {
    pub fn new(src_ratio: f64, tgt_ratio: f64, p: &BiomechParams) -> Result<Self> {
        p.validate()?;
        for r in [src_ratio, tgt_ratio] {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::DegenerateGeometry(format!(
                    "pupil ratio {r} outside (0, 1)"
                )));
            }
        }
        let k = (1.0 - tgt_ratio * tgt_ratio) / (1.0 - src_ratio * src_ratio);
        let mut map = Self {
            src_ratio,
            tgt_ratio,
            k,
            table: Vec::new(),
        };
        let n = p.radial_samples;
        map.table = (0..n)
            .map(|i| map.forward(map.source_radius_at(i as f64 / (n - 1) as f64)))
            .collect();
        Ok(map)
    }

    pub fn src_ratio(&self) -> f64 {
        self.src_ratio
    }

    pub fn tgt_ratio(&self) -> f64 {
        self.tgt_ratio
    }

    fn source_radius_at(&self, s: f64) -> f64 {
        self.src_ratio + s * (1.0 - self.src_ratio)
    }

    /// Deformed radius of the material point at source radius `rho_s`.
    pub fn forward(&self, rho_s: f64) -> f64 {
        if rho_s == 1.0 {
            return 1.0;
        }
        if rho_s == self.src_ratio {
            return self.tgt_ratio;
        }
        (1.0 - self.k * (1.0 - rho_s * rho_s)).max(0.0).sqrt()
    }

    /// Radial displacement `forward(rho) - rho`.
    pub fn displacement(&self, rho_s: f64) -> f64 {
        self.forward(rho_s) - rho_s
    }

    /// Source radius whose material point lands at `rho_t`, by bracketing in
    /// the forward table and bisecting.
    pub fn inverse(&self, rho_t: f64) -> f64 {
        if rho_t >= 1.0 {
            return 1.0;
        }
        if rho_t <= self.tgt_ratio {
            return self.src_ratio;
        }
        let n = self.table.len();
        let hi_idx = self.table.partition_point(|&v| v < rho_t).clamp(1, n - 1);
        let mut lo = self.source_radius_at((hi_idx - 1) as f64 / (n - 1) as f64);
        let mut hi = self.source_radius_at(hi_idx as f64 / (n - 1) as f64);
        while hi - lo > BISECTION_TOL {
            let mid = 0.5 * (lo + hi);
            if self.forward(mid) < rho_t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Source-configuration radius whose material point moves to `r_target`.
/// Radii are measured from the respective iris centers.
pub fn biomech_source_radius(
    r_target: f64,
    c_src: &IrisCircles,
    c_tgt: &IrisCircles,
    p: &BiomechParams,
) -> Result<f64> {
    let (lo, hi) = (c_tgt.pupil.r, c_tgt.iris.r);
    let tol = 1e-9 * hi;
    if !(r_target >= lo - tol && r_target <= hi + tol) {
        return Err(Error::OutOfAnnulus {
            r: r_target,
            lo,
            hi,
        });
    }
    let map = BiomechMap::new(c_src.ratio(), c_tgt.ratio(), p)?;
    let rho_t = (r_target / hi).clamp(c_tgt.ratio(), 1.0);
    let rho_s = if r_target == lo {
        map.src_ratio()
    } else {
        map.inverse(rho_t)
    };
    Ok(rho_s * c_src.iris.r)
}

/// Client for an external deformer reached over HTTP.
///
/// Request: `POST <url>` with a `multipart/form-data` body holding three
/// `image/png` parts named `image`, `mask` and `target_mask`. Reply: `200`
/// with an `image/png` body of the same dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalDeformer {
    pub url: String,
    pub timeout: Duration,
}

impl ExternalDeformer {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Result<Self> {
        let url = url.into();
        if url.trim().is_empty() {
            return Err(Error::InvalidParameter(
                "external deformer URL is empty".into(),
            ));
        }
        Ok(Self { url, timeout })
    }

    pub fn deform(&self, img: &GrayImage, mask: &IrisMask, target: &IrisMask) -> Result<GrayImage> {
        use reqwest::blocking::multipart::{Form, Part};

        let part = |name: &'static str, bytes: Vec<u8>| -> Result<Part> {
            Part::bytes(bytes)
                .file_name(format!("{name}.png"))
                .mime_str("image/png")
                .map_err(|e| Error::ExternalUnavailable(e.to_string()))
        };
        let form = Form::new()
            .part("image", part("image", img.encode_png()?)?)
            .part("mask", part("mask", mask.encode_png()?)?)
            .part("target_mask", part("target_mask", target.encode_png()?)?);
        let client = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| Error::ExternalUnavailable(e.to_string()))?;
        let resp = client
            .post(&self.url)
            .multipart(form)
            .send()
            .map_err(|e| Error::ExternalUnavailable(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(Error::ExternalUnavailable(format!(
                "status {}",
                resp.status()
            )));
        }
        let body = resp
            .bytes()
            .map_err(|e| Error::ExternalUnavailable(e.to_string()))?;
        let out = GrayImage::decode_png(&body)
            .map_err(|e| Error::ExternalUnavailable(format!("malformed reply: {e}")))?;
        if out.width() != img.width() || out.height() != img.height() {
            return Err(Error::ExternalUnavailable(format!(
                "malformed reply: {}x{} image for a {}x{} request",
                out.width(),
                out.height(),
                img.width(),
                img.height()
            )));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DeformationModel {
    Linear,
    Biomechanical(BiomechParams),
    External(ExternalDeformer),
}

impl DeformationModel {
    pub fn name(&self) -> &'static str {
        match self {
            DeformationModel::Linear => "linear",
            DeformationModel::Biomechanical(_) => "biomech",
            DeformationModel::External(_) => "external",
        }
    }
}

/// Normalized-block size used when deforming: at least the default block,
/// finer when the annulus needs it so the block does not undersample.
pub fn sampling_dims(c: &IrisCircles) -> (usize, usize) {
    let offset = (c.pupil.cx - c.iris.cx).hypot(c.pupil.cy - c.iris.cy);
    let thickness = c.iris.r - c.pupil.r + offset;
    let rows = DEFAULT_ROWS.max((2.0 * thickness).ceil() as usize + 1);
    let cols = DEFAULT_COLS.max((2.0 * TAU * c.iris.r).ceil() as usize);
    (rows, cols)
}

/// Deforms the iris in `img` (shape `mask`) to the shape `target_mask`.
pub fn deform(
    img: &GrayImage,
    mask: &IrisMask,
    target_mask: &IrisMask,
    model: &DeformationModel,
) -> Result<(GrayImage, IrisMask)> {
    if !img.same_dims(mask) {
        return Err(Error::DimensionMismatch(format!(
            "image {}x{} vs mask {}x{}",
            img.width(),
            img.height(),
            mask.width(),
            mask.height()
        )));
    }
    mask.ensure_same_dims(target_mask)?;
    if let DeformationModel::External(ext) = model {
        if mask.is_empty() || target_mask.is_empty() {
            return Err(Error::EmptyMask);
        }
        let out = ext.deform(img, mask, target_mask)?;
        return Ok((out.masked(target_mask)?, target_mask.clone()));
    }
    let src = fit_circles(mask)?;
    let tgt = fit_circles(target_mask)?;
    deform_with_circles(img, mask, &src, target_mask, &tgt, model)
}

/// [`deform`] with circles already known.
pub fn deform_with_circles(
    img: &GrayImage,
    mask: &IrisMask,
    src: &IrisCircles,
    target_mask: &IrisMask,
    tgt: &IrisCircles,
    model: &DeformationModel,
) -> Result<(GrayImage, IrisMask)> {
    mask.ensure_same_dims(target_mask)?;
    let (w, h) = (target_mask.width(), target_mask.height());
    let (rows, cols) = sampling_dims(src);
    let (out, region) = match model {
        DeformationModel::Linear => {
            let n = rubber_sheet_normalize(img, mask, src, rows, cols)?;
            rubber_sheet_denormalize(&n, tgt, w, h)?
        }
        DeformationModel::Biomechanical(p) => {
            let n = rubber_sheet_normalize(img, mask, src, rows, cols)?;
            let map = BiomechMap::new(src.ratio(), tgt.ratio(), p)?;
            let (s, t) = (map.src_ratio(), map.tgt_ratio());
            denormalize_with(&n, tgt, w, h, |u_t| {
                let rho_s = map.inverse(t + u_t * (1.0 - t));
                ((rho_s - s) / (1.0 - s)).clamp(0.0, 1.0)
            })?
        }
        DeformationModel::External(_) => return deform(img, mask, target_mask, model),
    };
    let out_mask = region.intersect(target_mask)?;
    Ok((out.masked(&out_mask)?, out_mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Circle;

    fn circles(p: f64, i: f64) -> IrisCircles {
        IrisCircles::concentric(128.0, 128.0, p, i).unwrap()
    }

    #[test]
    fn angle_only_texture_gives_constant_columns() {
        let c = circles(40.0, 110.0);
        let img = GrayImage::from_fn(256, 256, |x, y| {
            let t = (y as f64 - 128.0).atan2(x as f64 - 128.0);
            (128.0 + 100.0 * (3.0 * t).sin()) as u8
        })
        .unwrap();
        let mask = IrisMask::annulus(256, 256, &c.pupil, &c.iris).unwrap();
        let n = rubber_sheet_normalize(&img, &mask, &c, 64, 256).unwrap();
        for col in 0..n.cols() {
            let vals: Vec<f64> = (4..60).map(|r| n.texture_at(r, col)).collect();
            let spread = vals.iter().cloned().fold(f64::MIN, f64::max)
                - vals.iter().cloned().fold(f64::MAX, f64::min);
            // resampling of an 8-bit angular ramp, not a radial dependence
            assert!(spread < 0.03, "col {col} spread {spread}");
        }
    }

    #[test]
    fn boundary_rows_sample_the_circles() {
        let c = IrisCircles::new(
            Circle::new(120.0, 130.0, 30.0).unwrap(),
            Circle::new(128.0, 128.0, 100.0).unwrap(),
        )
        .unwrap();
        for j in 0..16 {
            let theta = TAU * j as f64 / 16.0;
            let (x0, y0) = c.blend_point(0.0, theta);
            let (x1, y1) = c.blend_point(1.0, theta);
            assert!(((x0 - 120.0).hypot(y0 - 130.0) - 30.0).abs() < 1e-9);
            assert!(((x1 - 128.0).hypot(y1 - 128.0) - 100.0).abs() < 1e-9);
        }
    }

    #[test]
    fn upper_half_occlusion_clears_upper_columns() {
        let c = circles(40.0, 110.0);
        let img = GrayImage::from_fn(256, 256, |_, _| 128).unwrap();
        let mask = IrisMask::annulus(256, 256, &c.pupil, &c.iris)
            .unwrap()
            .intersect(&IrisMask::from_fn(256, 256, |_, y| y >= 128).unwrap())
            .unwrap();
        let n = rubber_sheet_normalize(&img, &mask, &c, 64, 512).unwrap();
        for col in 0..512 {
            let theta = TAU * col as f64 / 512.0;
            let valid_rows = (0..64).filter(|&r| n.valid_at(r, col)).count();
            if theta.sin() < -0.02 {
                assert_eq!(valid_rows, 0, "col {col} should be occluded");
            } else if theta.sin() > 0.02 {
                assert!(
                    valid_rows >= 60,
                    "col {col} has only {valid_rows} valid rows"
                );
            }
        }
    }

    #[test]
    fn normalize_checks_inputs() {
        let c = circles(40.0, 110.0);
        let img = GrayImage::new(256, 256).unwrap();
        let mask = IrisMask::full(128, 128).unwrap();
        assert!(matches!(
            rubber_sheet_normalize(&img, &mask, &c, 64, 512),
            Err(Error::DimensionMismatch(_))
        ));
        let crossing = IrisCircles::new(
            Circle::new(128.0, 200.0, 30.0).unwrap(),
            Circle::new(128.0, 128.0, 90.0).unwrap(),
        )
        .unwrap();
        let mask = IrisMask::full(256, 256).unwrap();
        assert!(matches!(
            rubber_sheet_normalize(&img, &mask, &crossing, 64, 512),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn constant_block_gives_constant_annulus() {
        let n = NormalizedIris::new(8, 32, vec![0.5; 256], vec![true; 256]).unwrap();
        let c = circles(30.0, 90.0);
        let (img, mask) = rubber_sheet_denormalize(&n, &c, 256, 256).unwrap();
        for y in 0..256 {
            for x in 0..256 {
                if mask.get(x, y) {
                    assert_eq!(img.get(x, y), 128);
                } else {
                    assert_eq!(img.get(x, y), 0);
                }
            }
        }
        assert_eq!(
            mask,
            IrisMask::annulus(256, 256, &c.pupil, &c.iris).unwrap()
        );
    }

    #[test]
    fn denormalized_area_matches_annulus_formula() {
        let n = NormalizedIris::new(64, 512, vec![0.5; 64 * 512], vec![true; 64 * 512]).unwrap();
        let c = circles(60.0, 110.0);
        let (_, mask) = rubber_sheet_denormalize(&n, &c, 256, 256).unwrap();
        let area = std::f64::consts::PI * (110.0f64.powi(2) - 60.0f64.powi(2));
        let rel = (mask.count() as f64 - area).abs() / area;
        assert!(rel < 0.01, "relative area error {rel}");
    }

    #[test]
    fn biomech_boundary_conditions() {
        let src = circles(30.0, 100.0);
        let tgt = circles(60.0, 100.0);
        let p = BiomechParams::default();
        let at_root = biomech_source_radius(100.0, &src, &tgt, &p).unwrap();
        let at_margin = biomech_source_radius(60.0, &src, &tgt, &p).unwrap();
        assert!((at_root - 100.0).abs() < 1e-9);
        assert!((at_margin - 30.0).abs() < 1e-9);
        assert!(matches!(
            biomech_source_radius(59.0, &src, &tgt, &p),
            Err(Error::OutOfAnnulus { .. })
        ));
        assert!(matches!(
            biomech_source_radius(100.5, &src, &tgt, &p),
            Err(Error::OutOfAnnulus { .. })
        ));
    }

    /// Closed-form inverse of the finite radial map, independent of the
    /// table-plus-bisection path.
    fn closed_form_source(rho_t: f64, s: f64, t: f64) -> f64 {
        let k = (1.0 - t * t) / (1.0 - s * s);
        (1.0 - (1.0 - rho_t * rho_t) / k).sqrt()
    }

    #[test]
    fn biomech_inverse_matches_closed_form_and_differs_from_linear() {
        let src = circles(30.0, 100.0);
        let tgt = circles(60.0, 100.0);
        let p = BiomechParams::default();
        let r_t = 80.0;
        let r_s = biomech_source_radius(r_t, &src, &tgt, &p).unwrap();
        let oracle = 100.0 * closed_form_source(0.8, 0.3, 0.6);
        assert!((r_s - oracle).abs() < 1e-6, "{r_s} vs {oracle}");
        // linear blend: u = (80 - 60) / 40 = 0.5 -> 30 + 0.5 * 70 = 65
        let linear = 65.0;
        assert!(
            (r_s - linear).abs() > 1.0,
            "biomech {r_s} vs linear {linear}"
        );
    }

    #[test]
    fn biomech_map_is_strictly_monotone() {
        for (s, t) in [(0.2, 0.7), (0.7, 0.2), (0.3, 0.6), (0.5, 0.5)] {
            let map = BiomechMap::new(s, t, &BiomechParams::default()).unwrap();
            let mut prev = f64::MIN;
            for i in 0..=1000 {
                let rho = s + (1.0 - s) * i as f64 / 1000.0;
                let f = map.forward(rho);
                assert!(f > prev, "not increasing at {rho} for {s}->{t}");
                prev = f;
            }
        }
    }

    #[test]
    fn biomech_params_are_validated() {
        let bad = BiomechParams {
            nu: 0.7,
            radial_samples: 512,
        };
        assert!(BiomechMap::new(0.3, 0.5, &bad).is_err());
        let bad = BiomechParams {
            nu: 0.3,
            radial_samples: 1,
        };
        assert!(BiomechMap::new(0.3, 0.5, &bad).is_err());
    }

    #[test]
    fn external_requires_url() {
        assert!(ExternalDeformer::new("  ", Duration::from_secs(1)).is_err());
    }

    #[test]
    fn external_unreachable_endpoint() {
        let img = GrayImage::new(64, 64).unwrap();
        let c = IrisCircles::concentric(32.0, 32.0, 10.0, 25.0).unwrap();
        let mask = IrisMask::annulus(64, 64, &c.pupil, &c.iris).unwrap();
        // port 9 (discard) on localhost is closed in the test sandbox
        let ext =
            ExternalDeformer::new("http://127.0.0.1:9/deform", Duration::from_millis(500)).unwrap();
        let err = deform(&img, &mask, &mask, &DeformationModel::External(ext)).unwrap_err();
        assert!(matches!(err, Error::ExternalUnavailable(_)), "{err}");
    }
}
