//! Pupil/iris circle geometry, pupil-to-iris ratios, dataset binning and
//! pairing, and target-mask estimation.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::IrisMask;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

impl Circle {
    pub fn new(cx: f64, cy: f64, r: f64) -> Result<Self> {
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::DegenerateGeometry(format!(
                "non-finite center ({cx}, {cy})"
            )));
        }
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::DegenerateGeometry(format!(
                "radius {r} must be positive"
            )));
        }
        Ok(Self { cx, cy, r })
    }

    /// Closed-disk membership.
    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let dx = x - self.cx;
        let dy = y - self.cy;
        dx * dx + dy * dy <= self.r * self.r
    }

    pub fn with_radius(&self, r: f64) -> Result<Self> {
        Self::new(self.cx, self.cy, r)
    }

    /// Point on the circle at angle `theta` (image axes, y down).
    #[inline]
    pub fn point_at(&self, theta: f64) -> (f64, f64) {
        (
            self.cx + self.r * theta.cos(),
            self.cy + self.r * theta.sin(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrisCircles {
    pub pupil: Circle,
    pub iris: Circle,
}

impl IrisCircles {
    pub fn new(pupil: Circle, iris: Circle) -> Result<Self> {
        if pupil.r >= iris.r {
            return Err(Error::DegenerateGeometry(format!(
                "pupil radius {:.3} not below iris radius {:.3}",
                pupil.r, iris.r
            )));
        }
        let d = (pupil.cx - iris.cx).hypot(pupil.cy - iris.cy);
        if d >= iris.r {
            return Err(Error::DegenerateGeometry(format!(
                "pupil center lies {d:.3} px from the iris center, outside radius {:.3}",
                iris.r
            )));
        }
        Ok(Self { pupil, iris })
    }

    /// Concentric circles centered at `(cx, cy)`.
    pub fn concentric(cx: f64, cy: f64, pupil_r: f64, iris_r: f64) -> Result<Self> {
        Self::new(Circle::new(cx, cy, pupil_r)?, Circle::new(cx, cy, iris_r)?)
    }

    pub fn ratio(&self) -> f64 {
        pupil_iris_ratio(self)
    }

    /// Errors unless the pupil disk lies entirely inside the iris disk.
    pub fn ensure_nested(&self) -> Result<()> {
        let d = (self.pupil.cx - self.iris.cx).hypot(self.pupil.cy - self.iris.cy);
        if d + self.pupil.r >= self.iris.r {
            return Err(Error::DegenerateGeometry(format!(
                "pupil circle (offset {d:.3}, r {:.3}) crosses the iris circle (r {:.3})",
                self.pupil.r, self.iris.r
            )));
        }
        Ok(())
    }

    /// Rubber-sheet point: `(1 - u) P(theta) + u Q(theta)` with `P`, `Q` on the
    /// pupil and iris circles.
    #[inline]
    pub fn blend_point(&self, u: f64, theta: f64) -> (f64, f64) {
        let (px, py) = self.pupil.point_at(theta);
        let (qx, qy) = self.iris.point_at(theta);
        ((1.0 - u) * px + u * qx, (1.0 - u) * py + u * qy)
    }

    /// Inverse of [`blend_point`](Self::blend_point): `(u, theta)` with
    /// `theta` in `[0, 2 pi)`. Requires nested circles; `u` may fall outside
    /// `[0, 1]` for points off the annulus.
    ///
    /// The blend traces circles centered at `cp + u (ci - cp)` with radius
    /// `rp + u (ri - rp)`, so `u` solves a quadratic.
    pub fn polar(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        let (ax, ay) = (x - self.pupil.cx, y - self.pupil.cy);
        let (dx, dy) = (self.iris.cx - self.pupil.cx, self.iris.cy - self.pupil.cy);
        let dr = self.iris.r - self.pupil.r;
        let rp = self.pupil.r;
        let a = dx * dx + dy * dy - dr * dr;
        let b = -2.0 * (ax * dx + ay * dy + rp * dr);
        let c = ax * ax + ay * ay - rp * rp;
        if a >= 0.0 {
            return None;
        }
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            return None;
        }
        // larger root; the other one has negative blended radius
        let u = (-b - disc.sqrt()) / (2.0 * a);
        let (ccx, ccy) = (ax - u * dx, ay - u * dy);
        let theta = ccy.atan2(ccx).rem_euclid(std::f64::consts::TAU);
        Some((u, theta))
    }

    /// Pixel-membership test for the annulus: inside the iris disk, outside the pupil disk.
    #[inline]
    pub fn annulus_contains(&self, x: f64, y: f64) -> bool {
        self.iris.contains(x, y) && !self.pupil.contains(x, y)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        let shift = |c: Circle| Circle {
            cx: c.cx + dx,
            cy: c.cy + dy,
            r: c.r,
        };
        Self {
            pupil: shift(self.pupil),
            iris: shift(self.iris),
        }
    }
}

pub fn pupil_iris_ratio(c: &IrisCircles) -> f64 {
    c.pupil.r / c.iris.r
}

/// `|p1/i1 - p2/i2|`, the dilation mismatch between two eyes.
pub fn ratio_delta(a: &IrisCircles, b: &IrisCircles) -> f64 {
    (pupil_iris_ratio(a) - pupil_iris_ratio(b)).abs()
}

const RAY_COUNT: usize = 720;
const RAY_STEP: f64 = 0.25;
const RANSAC_ITERATIONS: usize = 300;
const RANSAC_SEED: u64 = 0x1415_9265;
const INLIER_TOLERANCE: f64 = 1.5;

/// Least-squares pupil and iris circles of an (optionally occluded) annulus.
///
/// Boundary points come from a radial scan out of the mask centroid: the
/// first unset-to-set transition on each ray is a pupil edge, the last
/// set-to-unset transition an iris edge. Each point set is fitted with a
/// seeded RANSAC consensus followed by an algebraic (Kasa) refit on the
/// inliers, which rejects eyelid-boundary points.
pub fn fit_circles(mask: &IrisMask) -> Result<IrisCircles> {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) {
                sx += x as f64;
                sy += y as f64;
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    let (ox, oy) = (sx / n as f64, sy / n as f64);
    let (inner, outer) = scan_boundaries(mask, ox, oy);
    if inner.len() < 8 {
        return Err(Error::DegenerateGeometry("pupil boundary not found".into()));
    }
    if outer.len() < 8 {
        return Err(Error::DegenerateGeometry("iris boundary not found".into()));
    }
    let pupil = robust_circle_fit(&inner)?;
    let iris = robust_circle_fit(&outer)?;
    IrisCircles::new(pupil, iris)
}

type Points = Vec<(f64, f64)>;

/// Inner and outer mask boundary points along rays cast from `(ox, oy)`.
fn scan_boundaries(mask: &IrisMask, ox: f64, oy: f64) -> (Points, Points) {
    let max_len = (mask.width() as f64).hypot(mask.height() as f64) + 2.0;
    let steps = (max_len / RAY_STEP).ceil() as usize;
    let mut inner = Vec::with_capacity(RAY_COUNT);
    let mut outer = Vec::with_capacity(RAY_COUNT);
    for i in 0..RAY_COUNT {
        let theta = std::f64::consts::TAU * i as f64 / RAY_COUNT as f64;
        let (dx, dy) = (theta.cos(), theta.sin());
        let mut prev = mask.sample_nearest(ox, oy);
        let started_outside = !prev;
        let mut first_in = None;
        let mut last_out = None;
        for s in 1..=steps {
            let t = s as f64 * RAY_STEP;
            let cur = mask.sample_nearest(ox + t * dx, oy + t * dy);
            if cur != prev {
                let tm = t - 0.5 * RAY_STEP;
                let p = (ox + tm * dx, oy + tm * dy);
                if cur && first_in.is_none() && started_outside {
                    first_in = Some(p);
                }
                if !cur {
                    last_out = Some(p);
                }
                prev = cur;
            }
        }
        inner.extend(first_in);
        outer.extend(last_out);
    }
    (inner, outer)
}

fn robust_circle_fit(points: &[(f64, f64)]) -> Result<Circle> {
    let mut rng = ChaCha8Rng::seed_from_u64(RANSAC_SEED);
    let mut best: Option<(usize, Circle)> = None;
    for _ in 0..RANSAC_ITERATIONS {
        let a = points[rng.gen_range(0..points.len())];
        let b = points[rng.gen_range(0..points.len())];
        let c = points[rng.gen_range(0..points.len())];
        let Some(candidate) = circle_through(a, b, c) else {
            continue;
        };
        let count = points
            .iter()
            .filter(|p| residual(&candidate, **p) <= INLIER_TOLERANCE)
            .count();
        if best.is_none_or(|(n, _)| count > n) {
            best = Some((count, candidate));
        }
    }
    let mut circle = match best {
        Some((_, c)) => c,
        None => kasa_fit(points)?,
    };
    for _ in 0..4 {
        let inliers: Vec<(f64, f64)> = points
            .iter()
            .copied()
            .filter(|p| residual(&circle, *p) <= INLIER_TOLERANCE)
            .collect();
        if inliers.len() < 3 {
            break;
        }
        circle = kasa_fit(&inliers)?;
    }
    Ok(circle)
}

#[inline]
fn residual(c: &Circle, p: (f64, f64)) -> f64 {
    ((p.0 - c.cx).hypot(p.1 - c.cy) - c.r).abs()
}

fn circle_through(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> Option<Circle> {
    let d = 2.0 * (a.0 * (b.1 - c.1) + b.0 * (c.1 - a.1) + c.0 * (a.1 - b.1));
    if d.abs() < 1e-9 {
        return None;
    }
    let a2 = a.0 * a.0 + a.1 * a.1;
    let b2 = b.0 * b.0 + b.1 * b.1;
    let c2 = c.0 * c.0 + c.1 * c.1;
    let cx = (a2 * (b.1 - c.1) + b2 * (c.1 - a.1) + c2 * (a.1 - b.1)) / d;
    let cy = (a2 * (c.0 - b.0) + b2 * (a.0 - c.0) + c2 * (b.0 - a.0)) / d;
    Circle::new(cx, cy, (a.0 - cx).hypot(a.1 - cy)).ok()
}

/// Algebraic least-squares circle: minimizes `sum (x^2 + y^2 + D x + E y + F)^2`.
pub fn kasa_fit(points: &[(f64, f64)]) -> Result<Circle> {
    if points.len() < 3 {
        return Err(Error::DegenerateGeometry(
            "fewer than 3 boundary points".into(),
        ));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut m = Matrix3::<f64>::zeros();
    let mut rhs = Vector3::<f64>::zeros();
    for &(px, py) in points {
        let (x, y) = (px - mx, py - my);
        let z = x * x + y * y;
        let row = Vector3::new(x, y, 1.0);
        m += row * row.transpose();
        rhs -= row * z;
    }
    let sol = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::DegenerateGeometry("collinear boundary points".into()))?;
    let (cx, cy) = (-sol[0] / 2.0, -sol[1] / 2.0);
    let r2 = cx * cx + cy * cy - sol[2];
    if r2 <= 0.0 {
        return Err(Error::DegenerateGeometry("imaginary circle radius".into()));
    }
    Circle::new(cx + mx, cy + my, r2.sqrt())
}

/// Pupil-to-iris ratio bins: `[lo, lo + width]`, `(lo + width, lo + 2 width]`, ...
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    pub lo: f64,
    pub hi: f64,
    pub width: f64,
}

const BIN_EPS: f64 = 1e-9;

impl Default for Binning {
    fn default() -> Self {
        Self {
            lo: 0.2,
            hi: 0.7,
            width: 0.1,
        }
    }
}

impl Binning {
    pub fn new(lo: f64, hi: f64, width: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && width.is_finite()) || lo >= hi || width <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "binning needs lo < hi and width > 0, got lo={lo} hi={hi} width={width}"
            )));
        }
        let k = (hi - lo) / width;
        if (k - k.round()).abs() > 1e-6 {
            return Err(Error::InvalidParameter(format!(
                "range {lo}..{hi} is not a multiple of width {width}"
            )));
        }
        Ok(Self { lo, hi, width })
    }

    pub fn bin_count(&self) -> usize {
        ((self.hi - self.lo) / self.width).round() as usize
    }

    pub fn bin_bounds(&self, k: usize) -> (f64, f64) {
        (
            self.lo + k as f64 * self.width,
            self.lo + (k + 1) as f64 * self.width,
        )
    }
}

impl std::str::FromStr for Binning {
    type Err = Error;

    /// Parses `lo,hi,width`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidParameter(format!("bins '{s}': {e}")))?;
        match parts.as_slice() {
            [lo, hi, width] => Binning::new(*lo, *hi, *width),
            _ => Err(Error::InvalidParameter(format!(
                "bins '{s}' must be lo,hi,width"
            ))),
        }
    }
}

/// Bin index of `ratio`; `Err(OutOfRange)` outside `[lo, hi]`.
pub fn assign_bin(ratio: f64, b: &Binning) -> Result<usize> {
    if !ratio.is_finite() || ratio < b.lo - BIN_EPS || ratio > b.hi + BIN_EPS {
        return Err(Error::OutOfRange(ratio));
    }
    let t = (ratio - b.lo) / b.width;
    let k = (t - BIN_EPS).ceil() as isize - 1;
    Ok(k.clamp(0, b.bin_count() as isize - 1) as usize)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    #[serde(rename = "image")]
    pub image_path: String,
    #[serde(rename = "mask")]
    pub mask_path: String,
    #[serde(rename = "identity")]
    pub identity_id: String,
    #[serde(rename = "eye")]
    pub eye_label: String,
    #[serde(rename = "pupil_r")]
    pub pupil_radius: f64,
    #[serde(rename = "iris_r")]
    pub iris_radius: f64,
}

impl ManifestRow {
    pub fn ratio(&self) -> f64 {
        self.pupil_radius / self.iris_radius
    }

    /// Rows with equal keys depict the same eye.
    pub fn eye_key(&self) -> (&str, &str) {
        (&self.identity_id, &self.eye_label)
    }

    fn validate(&self, line: usize) -> Result<()> {
        if self.identity_id.trim().is_empty() {
            return Err(Error::InvalidParameter(format!(
                "row {line}: empty identity"
            )));
        }
        if !(self.pupil_radius > 0.0 && self.pupil_radius < self.iris_radius) {
            return Err(Error::InvalidParameter(format!(
                "row {line}: need 0 < pupil_r < iris_r, got {} and {}",
                self.pupil_radius, self.iris_radius
            )));
        }
        Ok(())
    }
}

/// Image manifest, CSV header `image,mask,identity,eye,pupil_r,iris_r`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairManifest {
    pub rows: Vec<ManifestRow>,
}

impl PairManifest {
    pub fn new(rows: Vec<ManifestRow>) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            row.validate(i + 1)?;
        }
        Ok(Self { rows })
    }

    pub fn from_reader(reader: impl std::io::Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let rows = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<ManifestRow>, _>>()?;
        Self::new(rows)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file)
    }

    pub fn to_writer(&self, writer: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        if self.rows.is_empty() {
            w.write_record(["image", "mask", "identity", "eye", "pupil_r", "iris_r"])?;
        }
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.to_writer(file)
    }
}

/// An ordered (input, target) training pair, by manifest row index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub input: usize,
    pub target: usize,
    pub input_bin: usize,
    pub target_bin: usize,
}

/// Every ordered same-eye pair whose ratio bins differ, in manifest order.
/// Rows outside the binning range are skipped.
pub fn make_pairs(m: &PairManifest, b: &Binning) -> Vec<TrainingPair> {
    let bins: Vec<Option<usize>> = m
        .rows
        .iter()
        .map(|r| assign_bin(r.ratio(), b).ok())
        .collect();
    let mut pairs = Vec::new();
    for (i, ri) in m.rows.iter().enumerate() {
        let Some(bi) = bins[i] else { continue };
        for (j, rj) in m.rows.iter().enumerate() {
            let Some(bj) = bins[j] else { continue };
            if bi != bj && ri.eye_key() == rj.eye_key() {
                pairs.push(TrainingPair {
                    input: i,
                    target: j,
                    input_bin: bi,
                    target_bin: bj,
                });
            }
        }
    }
    pairs
}

/// Dilation target: the input mask with a larger pupil disk cut out.
pub fn target_mask_dilate(mask: &IrisMask, c: &IrisCircles, new_pupil_r: f64) -> Result<IrisMask> {
    if !(new_pupil_r > c.pupil.r && new_pupil_r < c.iris.r) {
        return Err(Error::BadRadius(format!(
            "dilation radius {new_pupil_r} must lie in ({}, {})",
            c.pupil.r, c.iris.r
        )));
    }
    let mut out = mask.clone();
    out.paint_disk(&c.pupil.with_radius(new_pupil_r)?, false);
    Ok(out)
}

/// Constriction target: fill the old pupil, cut the smaller one, then keep
/// only what lies inside the eyelids.
pub fn target_mask_constrict(
    mask: &IrisMask,
    c: &IrisCircles,
    new_pupil_r: f64,
    eyelid: &IrisMask,
) -> Result<IrisMask> {
    if !(new_pupil_r > 0.0 && new_pupil_r < c.pupil.r) {
        return Err(Error::BadRadius(format!(
            "constriction radius {new_pupil_r} must lie in (0, {})",
            c.pupil.r
        )));
    }
    mask.ensure_same_dims(eyelid)?;
    let mut out = mask.clone();
    out.paint_disk(&c.pupil, true);
    out.paint_disk(&c.pupil.with_radius(new_pupil_r)?, false);
    out.intersect(eyelid)
}

/// Circular annulus concentric with the iris at pupil-to-iris ratio `alpha`,
/// clipped to the eyelid opening.
pub fn circular_target_mask(c: &IrisCircles, alpha: f64, eyelid: &IrisMask) -> Result<IrisMask> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::BadRadius(format!(
            "alpha {alpha} must lie in (0, 1)"
        )));
    }
    let pupil = c.iris.with_radius(alpha * c.iris.r)?;
    IrisMask::annulus(eyelid.width(), eyelid.height(), &pupil, &c.iris)?.intersect(eyelid)
}
