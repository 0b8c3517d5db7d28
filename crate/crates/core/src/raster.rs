//! 8-bit grayscale images and binary masks, plus PNG I/O.
//!
//! Pixel `(x, y)` has its center at continuous coordinate `(x, y)`. A pixel
//! belongs to a disk when its center lies within the closed disk.

use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, Luma};

use crate::error::{Error, Result};
use crate::geometry::Circle;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        Self::from_raw(width, height, vec![0; width * height])
    }

    pub fn from_raw(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> u8,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::from_raw(width, height, pixels)
    }

    /// Builds an image from real intensities, rounding and clamping to `0..=255`.
    pub fn from_f64(width: usize, height: usize, values: &[f64]) -> Result<Self> {
        let pixels = values.iter().map(|&v| quantize(v)).collect();
        Self::from_raw(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| f64::from(p)).collect()
    }

    /// Bilinear sample with clamp-to-edge addressing, in intensity units.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        bilinear(self.width, self.height, x, y, |xi, yi| {
            f64::from(self.get(xi, yi))
        })
    }

    pub fn same_dims(&self, mask: &IrisMask) -> bool {
        self.width == mask.width() && self.height == mask.height()
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode_png(&bytes)
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?.into_luma8();
        let (w, h) = img.dimensions();
        Self::from_raw(w as usize, h as usize, img.into_raw())
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let buf = image::ImageBuffer::<Luma<u8>, _>::from_raw(
            self.width as u32,
            self.height as u32,
            self.pixels.clone(),
        )
        .expect("buffer length matches dimensions");
        let mut out = Cursor::new(Vec::new());
        buf.write_to(&mut out, ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.encode_png()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    /// Zeroes every pixel whose mask bit is clear.
    pub fn masked(&self, mask: &IrisMask) -> Result<Self> {
        if !self.same_dims(mask) {
            return Err(Error::DimensionMismatch(format!(
                "image {}x{} vs mask {}x{}",
                self.width,
                self.height,
                mask.width(),
                mask.height()
            )));
        }
        let pixels = self
            .pixels
            .iter()
            .zip(mask.bits())
            .map(|(&p, &m)| if m { p } else { 0 })
            .collect();
        Self::from_raw(self.width, self.height, pixels)
    }
}

/// Binary raster, `true` marks iris texture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IrisMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl IrisMask {
    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Self::from_bits(width, height, vec![false; width * height])
    }

    pub fn full(width: usize, height: usize) -> Result<Self> {
        Self::from_bits(width, height, vec![true; width * height])
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!(
                "mask dimensions must be positive, got {width}x{height}"
            )));
        }
        if bits.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} bits for a {width}x{height} mask",
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self> {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self::from_bits(width, height, bits)
    }

    /// Pixels inside `outer` and strictly outside `inner`.
    pub fn annulus(width: usize, height: usize, inner: &Circle, outer: &Circle) -> Result<Self> {
        Self::from_fn(width, height, |x, y| {
            outer.contains(x as f64, y as f64) && !inner.contains(x as f64, y as f64)
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn same_dims(&self, other: &IrisMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn ensure_same_dims(&self, other: &IrisMask) -> Result<()> {
        if self.same_dims(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "mask {}x{} vs mask {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }

    pub fn is_subset_of(&self, other: &IrisMask) -> bool {
        self.same_dims(other) && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    pub fn intersect(&self, other: &IrisMask) -> Result<Self> {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn union(&self, other: &IrisMask) -> Result<Self> {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn difference(&self, other: &IrisMask) -> Result<Self> {
        self.zip_with(other, |a, b| a && !b)
    }

    pub fn complement(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|&b| !b).collect(),
        }
    }

    fn zip_with(&self, other: &IrisMask, f: impl Fn(bool, bool) -> bool) -> Result<Self> {
        self.ensure_same_dims(other)?;
        Ok(Self {
            width: self.width,
            height: self.height,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Sets (`value = true`) or clears every pixel inside the closed disk.
    pub fn paint_disk(&mut self, disk: &Circle, value: bool) {
        let y0 = (disk.cy - disk.r).floor().max(0.0) as usize;
        let y1 = ((disk.cy + disk.r).ceil().max(0.0) as usize).min(self.height.saturating_sub(1));
        let x0 = (disk.cx - disk.r).floor().max(0.0) as usize;
        let x1 = ((disk.cx + disk.r).ceil().max(0.0) as usize).min(self.width.saturating_sub(1));
        for y in y0..=y1 {
            for x in x0..=x1 {
                if disk.contains(x as f64, y as f64) {
                    self.set(x, y, value);
                }
            }
        }
    }

    /// Bilinear sample of the 0/1 raster; outside the raster reads as 0.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        if x < -1.0 || y < -1.0 || x > self.width as f64 || y > self.height as f64 {
            return 0.0;
        }
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let at = |xi: f64, yi: f64| -> f64 {
            if xi < 0.0 || yi < 0.0 || xi >= self.width as f64 || yi >= self.height as f64 {
                0.0
            } else if self.get(xi as usize, yi as usize) {
                1.0
            } else {
                0.0
            }
        };
        let top = at(x0, y0) * (1.0 - fx) + at(x0 + 1.0, y0) * fx;
        let bottom = at(x0, y0 + 1.0) * (1.0 - fx) + at(x0 + 1.0, y0 + 1.0) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Nearest-pixel lookup; outside the raster reads as unset.
    pub fn sample_nearest(&self, x: f64, y: f64) -> bool {
        let xi = x.round();
        let yi = y.round();
        if xi < 0.0 || yi < 0.0 || xi >= self.width as f64 || yi >= self.height as f64 {
            false
        } else {
            self.get(xi as usize, yi as usize)
        }
    }

    pub fn to_image(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            pixels: self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect(),
        }
    }

    /// Pixels `>= 128` are set.
    pub fn from_image(img: &GrayImage) -> Self {
        Self {
            width: img.width(),
            height: img.height(),
            bits: img.pixels().iter().map(|&p| p >= 128).collect(),
        }
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::from_image(&GrayImage::load_png(path)?))
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self> {
        Ok(Self::from_image(&GrayImage::decode_png(bytes)?))
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        self.to_image().encode_png()
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_image().save_png(path)
    }
}

#[inline]
pub(crate) fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Bilinear interpolation over a `width x height` grid with clamp-to-edge.
pub(crate) fn bilinear(
    width: usize,
    height: usize,
    x: f64,
    y: f64,
    at: impl Fn(usize, usize) -> f64,
) -> f64 {
    let xc = x.clamp(0.0, (width - 1) as f64);
    let yc = y.clamp(0.0, (height - 1) as f64);
    let x0 = xc.floor() as usize;
    let y0 = yc.floor() as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = xc - x0 as f64;
    let fy = yc - y0 as f64;
    let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
    let bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Separable Gaussian blur with clamp-to-edge borders. `sigma <= 0` returns a copy.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> GrayImage {
    if sigma <= 0.0 {
        return img.clone();
    }
    let (w, h) = (img.width(), img.height());
    let kernel = gaussian_kernel_1d(sigma, (3.0 * sigma).ceil() as usize);
    let half = (kernel.len() / 2) as isize;
    let src = img.to_f64();
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, k) in kernel.iter().enumerate() {
                let xi = (x as isize + i as isize - half).clamp(0, w as isize - 1) as usize;
                acc += k * src[y * w + xi];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, k) in kernel.iter().enumerate() {
                let yi = (y as isize + i as isize - half).clamp(0, h as isize - 1) as usize;
                acc += k * tmp[yi * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    GrayImage::from_f64(w, h, &out).expect("dimensions preserved")
}

/// Normalized 1-D Gaussian with `2 * half + 1` taps.
pub(crate) fn gaussian_kernel_1d(sigma: f64, half: usize) -> Vec<f64> {
    let mut k: Vec<f64> = (0..=2 * half)
        .map(|i| {
            let d = i as f64 - half as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}
