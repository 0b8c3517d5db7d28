//! 2-D filter kernels and their on-disk container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! 0..4        magic  b"IKF1"
//! 4..8        u32    JSON header length N
//! 8..8+N      JSON   {"count": K, "kernels": [{"width", "height", "wavelength", "orientation", "name"}, ...]}
//! then for each kernel in header order:
//!             f32 x (height * width)  real plane, row-major
//!             f32 x (height * width)  imaginary plane, row-major
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"IKF1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelMeta {
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub wavelength: f64,
    #[serde(default)]
    pub orientation: f64,
    #[serde(default)]
    pub name: String,
}

/// Complex kernel; `x` runs along the width, `y` along the height, and the
/// center tap sits at `(width / 2, height / 2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub meta: KernelMeta,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl Kernel {
    pub fn new(meta: KernelMeta, re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        let n = meta.width * meta.height;
        if meta.width.is_multiple_of(2) || meta.height.is_multiple_of(2) {
            return Err(Error::KernelFormat(format!(
                "kernel '{}' has even dimensions {}x{}",
                meta.name, meta.width, meta.height
            )));
        }
        if re.len() != n || im.len() != n {
            return Err(Error::KernelFormat(format!(
                "kernel '{}' planes have {}/{} taps, expected {n}",
                meta.name,
                re.len(),
                im.len()
            )));
        }
        if re.iter().chain(&im).any(|v| !v.is_finite()) {
            return Err(Error::KernelFormat(format!(
                "kernel '{}' has non-finite taps",
                meta.name
            )));
        }
        Ok(Self { meta, re, im })
    }

    pub fn width(&self) -> usize {
        self.meta.width
    }

    pub fn height(&self) -> usize {
        self.meta.height
    }

    pub fn half_width(&self) -> usize {
        self.meta.width / 2
    }

    pub fn half_height(&self) -> usize {
        self.meta.height / 2
    }

    /// `|sum of taps|`, the response to a constant input.
    pub fn dc(&self) -> f64 {
        let sr: f64 = self.re.iter().sum();
        let si: f64 = self.im.iter().sum();
        sr.hypot(si)
    }

    /// Subtracts the mean from both planes.
    pub fn remove_dc(&mut self) {
        let n = self.re.len() as f64;
        let mr = self.re.iter().sum::<f64>() / n;
        let mi = self.im.iter().sum::<f64>() / n;
        self.re.iter_mut().for_each(|v| *v -= mr);
        self.im.iter_mut().for_each(|v| *v -= mi);
    }

    /// Complex frequency response at `(fx, fy)` cycles per pixel.
    pub fn frequency_response(&self, fx: f64, fy: f64) -> (f64, f64) {
        let (hx, hy) = (self.half_width() as f64, self.half_height() as f64);
        let (mut acc_re, mut acc_im) = (0.0, 0.0);
        for y in 0..self.height() {
            for x in 0..self.width() {
                let phase = -std::f64::consts::TAU * (fx * (x as f64 - hx) + fy * (y as f64 - hy));
                let (s, c) = phase.sin_cos();
                let i = y * self.width() + x;
                acc_re += self.re[i] * c - self.im[i] * s;
                acc_im += self.re[i] * s + self.im[i] * c;
            }
        }
        (acc_re, acc_im)
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    count: usize,
    kernels: Vec<KernelMeta>,
}

pub fn encode_kernels(kernels: &[Kernel]) -> Result<Vec<u8>> {
    let header = Header {
        count: kernels.len(),
        kernels: kernels.iter().map(|k| k.meta.clone()).collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::KernelFormat(e.to_string()))?;
    let mut out = Vec::with_capacity(8 + json.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for k in kernels {
        for v in k.re.iter().chain(&k.im) {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_kernels(bytes: &[u8]) -> Result<Vec<Kernel>> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(Error::KernelFormat("missing IKF1 magic".into()));
    }
    let hlen = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let body = bytes
        .get(8..8 + hlen)
        .ok_or_else(|| Error::KernelFormat("truncated header".into()))?;
    let header: Header =
        serde_json::from_slice(body).map_err(|e| Error::KernelFormat(format!("header: {e}")))?;
    if header.count != header.kernels.len() {
        return Err(Error::KernelFormat(format!(
            "header count {} but {} kernel entries",
            header.count,
            header.kernels.len()
        )));
    }
    let mut pos = 8 + hlen;
    let mut read_plane = |n: usize| -> Result<Vec<f64>> {
        let raw = bytes
            .get(pos..pos + 4 * n)
            .ok_or_else(|| Error::KernelFormat("truncated kernel data".into()))?;
        pos += 4 * n;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
            .collect())
    };
    let mut kernels = Vec::with_capacity(header.count);
    for meta in header.kernels {
        let n = meta.width * meta.height;
        let re = read_plane(n)?;
        let im = read_plane(n)?;
        kernels.push(Kernel::new(meta, re, im)?);
    }
    if pos != bytes.len() {
        return Err(Error::KernelFormat(format!(
            "{} trailing bytes after kernel data",
            bytes.len() - pos
        )));
    }
    Ok(kernels)
}

pub fn load_kernels(path: impl AsRef<Path>) -> Result<Vec<Kernel>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_kernels(&bytes)
}

pub fn save_kernels(path: impl AsRef<Path>, kernels: &[Kernel]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_kernels(kernels)?).map_err(|e| Error::io(path, e))
}
