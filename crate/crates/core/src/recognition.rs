//! Filter-bank iris encoding and matching.
//!
//! The normalized block is convolved with every kernel of a [`FilterBank`]
//! (circular along the angular axis, clamped along the radial axis). The
//! signs of the real and imaginary responses form the iris code; a code bit
//! is valid only when every texture sample under the kernel footprint was
//! valid. Responses with magnitude at or below `1e-9` quantize to bit 0.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::deformation::{rubber_sheet_normalize, NormalizedIris, DEFAULT_COLS, DEFAULT_ROWS};
use crate::error::{Error, Result};
use crate::geometry::IrisCircles;
use crate::kernels::{load_kernels, Kernel, KernelMeta};
use crate::raster::{GrayImage, IrisMask};

pub const DEFAULT_MAX_SHIFT: usize = 16;
pub const ZERO_THRESHOLD: f64 = 1e-9;
const DC_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    kernels: Vec<Kernel>,
}

impl FilterBank {
    /// Validates the zero-mean and odd-size invariants.
    pub fn new(kernels: Vec<Kernel>) -> Result<Self> {
        if kernels.is_empty() {
            return Err(Error::InvalidParameter("filter bank is empty".into()));
        }
        for k in &kernels {
            if k.dc() >= DC_TOLERANCE {
                return Err(Error::KernelFormat(format!(
                    "kernel '{}' has DC response {:.3e}",
                    k.meta.name,
                    k.dc()
                )));
            }
        }
        Ok(Self { kernels })
    }

    /// Loads kernels from a kernel container. Residual DC left by 32-bit
    /// storage is removed; kernels with a material DC term are rejected.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut kernels = load_kernels(path)?;
        for k in &mut kernels {
            let mass: f64 = k.re.iter().chain(&k.im).map(|v| v.abs()).sum();
            if k.dc() > 1e-4 * mass.max(1.0) {
                return Err(Error::KernelFormat(format!(
                    "kernel '{}' is not zero-mean (DC {:.3e})",
                    k.meta.name,
                    k.dc()
                )));
            }
            k.remove_dc();
        }
        Self::new(kernels)
    }

    pub fn kernels(&self) -> &[Kernel] {
        &self.kernels
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }
}

/// Zero-mean complex Gabor kernel. `orientation` 0 puts the carrier along
/// the angular (column) axis, `pi / 2` along the radial (row) axis. The
/// isotropic envelope has `sigma = wavelength / 3` and is cut at `2 sigma`.
pub fn gabor_kernel(wavelength: f64, orientation: f64) -> Kernel {
    let sigma = wavelength / 3.0;
    let half = (2.0 * sigma).ceil() as usize;
    let size = 2 * half + 1;
    let k = TAU / wavelength;
    let (co, so) = (orientation.cos(), orientation.sin());
    // Morlet correction: removes the carrier's DC leak through the envelope
    let leak = (-(k * sigma).powi(2) / 2.0).exp();
    let mut re = Vec::with_capacity(size * size);
    let mut im = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (dx, dy) = (x as f64 - half as f64, y as f64 - half as f64);
            let env = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
            let phase = k * (dx * co + dy * so);
            re.push(env * (phase.cos() - leak));
            im.push(env * phase.sin());
        }
    }
    let meta = KernelMeta {
        width: size,
        height: size,
        wavelength,
        orientation,
        name: format!("gabor_l{wavelength}_o{orientation:.4}"),
    };
    let mut kernel = Kernel::new(meta, re, im).expect("odd square kernel");
    kernel.remove_dc();
    kernel
}

/// Three log-spaced wavelengths (8, 16, 32 px), each with an angular and a
/// radial carrier: six complex kernels.
pub fn default_gabor_bank() -> FilterBank {
    let kernels = [8.0, 16.0, 32.0]
        .iter()
        .flat_map(|&l| [gabor_kernel(l, 0.0), gabor_kernel(l, FRAC_PI_2)])
        .collect();
    FilterBank::new(kernels).expect("gabor kernels are zero-mean")
}

/// Per-kernel complex response over the normalized block with its eroded validity.
#[derive(Debug, Clone)]
pub struct FilterResponse {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    pub valid: Vec<bool>,
}

/// Convolves the block with every kernel of the bank.
pub fn filter_responses(n: &NormalizedIris, bank: &FilterBank) -> Result<Vec<FilterResponse>> {
    let (rows, cols) = (n.rows(), n.cols());
    for k in bank.kernels() {
        if k.height() > rows {
            return Err(Error::KernelTooLarge {
                kernel: k.height(),
                rows,
            });
        }
        if k.width() > cols {
            return Err(Error::InvalidParameter(format!(
                "kernel width {} exceeds the angular extent {cols}",
                k.width()
            )));
        }
    }
    let pad = bank
        .kernels()
        .iter()
        .map(|k| k.half_height())
        .max()
        .unwrap_or(0);
    let height = rows + 2 * pad;
    let mut planner = FftPlanner::<f64>::new();
    let fft = Fft2d::new(&mut planner, height, cols);

    let mut input = vec![Complex::new(0.0, 0.0); height * cols];
    for p in 0..height {
        let src = (p as isize - pad as isize).clamp(0, rows as isize - 1) as usize;
        for c in 0..cols {
            input[p * cols + c] = Complex::new(n.texture_at(src, c), 0.0);
        }
    }
    fft.forward(&mut input);

    let scale = 1.0 / (height * cols) as f64;
    let mut out = Vec::with_capacity(bank.len());
    for k in bank.kernels() {
        let mut spec = vec![Complex::new(0.0, 0.0); height * cols];
        let (hx, hy) = (k.half_width() as isize, k.half_height() as isize);
        for y in 0..k.height() {
            for x in 0..k.width() {
                let dy = (y as isize - hy).rem_euclid(height as isize) as usize;
                let dx = (x as isize - hx).rem_euclid(cols as isize) as usize;
                let i = y * k.width() + x;
                spec[dy * cols + dx] += Complex::new(k.re[i], k.im[i]);
            }
        }
        fft.forward(&mut spec);
        for (s, x) in spec.iter_mut().zip(&input) {
            *s *= x;
        }
        fft.inverse(&mut spec);
        let mut re = Vec::with_capacity(rows * cols);
        let mut im = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for v in &spec[(r + pad) * cols..(r + pad + 1) * cols] {
                re.push(v.re * scale);
                im.push(v.im * scale);
            }
        }
        let valid = erode_validity(n, k.half_height(), k.half_width());
        out.push(FilterResponse { re, im, valid });
    }
    Ok(out)
}

/// A cell stays valid when every cell within `+-hy` rows (clamped) and
/// `+-hx` columns (wrapped) is valid.
fn erode_validity(n: &NormalizedIris, hy: usize, hx: usize) -> Vec<bool> {
    let (rows, cols) = (n.rows(), n.cols());
    let mut horizontal = vec![false; rows * cols];
    for r in 0..rows {
        // prefix counts of invalid cells over the row, tripled for wrap-around
        let mut prefix = vec![0usize; 3 * cols + 1];
        for i in 0..3 * cols {
            prefix[i + 1] = prefix[i] + usize::from(!n.valid_at(r, i % cols));
        }
        for c in 0..cols {
            let lo = cols + c - hx.min(cols);
            let hi = (cols + c + hx.min(cols - 1) + 1).min(3 * cols);
            horizontal[r * cols + c] = prefix[hi] - prefix[lo] == 0;
        }
    }
    let mut out = vec![false; rows * cols];
    for c in 0..cols {
        let mut prefix = vec![0usize; rows + 1];
        for r in 0..rows {
            prefix[r + 1] = prefix[r] + usize::from(!horizontal[r * cols + c]);
        }
        for r in 0..rows {
            let lo = r.saturating_sub(hy);
            let hi = (r + hy + 1).min(rows);
            out[r * cols + c] = prefix[hi] - prefix[lo] == 0;
        }
    }
    out
}

struct Fft2d {
    height: usize,
    width: usize,
    row_fwd: std::sync::Arc<dyn rustfft::Fft<f64>>,
    row_inv: std::sync::Arc<dyn rustfft::Fft<f64>>,
    col_fwd: std::sync::Arc<dyn rustfft::Fft<f64>>,
    col_inv: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl Fft2d {
    fn new(planner: &mut FftPlanner<f64>, height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    fn forward(&self, data: &mut [Complex<f64>]) {
        self.run(data, &*self.row_fwd, &*self.col_fwd);
    }

    fn inverse(&self, data: &mut [Complex<f64>]) {
        self.run(data, &*self.row_inv, &*self.col_inv);
    }

    fn run(
        &self,
        data: &mut [Complex<f64>],
        rows: &dyn rustfft::Fft<f64>,
        cols: &dyn rustfft::Fft<f64>,
    ) {
        rows.process(data);
        let mut column = vec![Complex::new(0.0, 0.0); self.height];
        for c in 0..self.width {
            for r in 0..self.height {
                column[r] = data[r * self.width + c];
            }
            cols.process(&mut column);
            for r in 0..self.height {
                data[r * self.width + c] = column[r];
            }
        }
    }
}

/// Binarized responses, laid out `[kernel][row][part][col]` with part 0 the
/// real sign and part 1 the imaginary sign.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IrisCode {
    kernels: usize,
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
    valid: Vec<bool>,
}

const CODE_MAGIC: &[u8; 4] = b"IRC1";

impl IrisCode {
    pub fn new(
        kernels: usize,
        rows: usize,
        cols: usize,
        bits: Vec<bool>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        let n = kernels * rows * cols * 2;
        if bits.len() != n || valid.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "code planes hold {}/{} bits, expected {n}",
                bits.len(),
                valid.len()
            )));
        }
        Ok(Self {
            kernels,
            rows,
            cols,
            bits,
            valid,
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.kernels, self.rows, self.cols)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn index(&self, kernel: usize, row: usize, part: usize, col: usize) -> usize {
        ((kernel * self.rows + row) * 2 + part) * self.cols + col
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Flips a bit; used to probe mask handling.
    pub fn flip(&mut self, i: usize) {
        self.bits[i] = !self.bits[i];
    }

    /// Serialized form: magic `IRC1`, three u32 LE (kernels, rows, cols),
    /// then bits and valid flags packed LSB-first.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CODE_MAGIC);
        for v in [self.kernels, self.rows, self.cols] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for plane in [&self.bits, &self.valid] {
            for chunk in plane.chunks(8) {
                out.push(
                    chunk
                        .iter()
                        .enumerate()
                        .fold(0u8, |b, (i, &v)| b | (u8::from(v) << i)),
                );
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != CODE_MAGIC {
            return Err(Error::InvalidParameter("not an IRC1 iris code".into()));
        }
        let word = |i: usize| {
            u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes")) as usize
        };
        let (kernels, rows, cols) = (word(0), word(1), word(2));
        let n = kernels * rows * cols * 2;
        let nbytes = n.div_ceil(8);
        if bytes.len() != 16 + 2 * nbytes {
            return Err(Error::InvalidParameter(
                "iris code length does not match its header".into(),
            ));
        }
        let unpack = |data: &[u8]| -> Vec<bool> {
            (0..n).map(|i| data[i / 8] >> (i % 8) & 1 == 1).collect()
        };
        let bits = unpack(&bytes[16..16 + nbytes]);
        let valid = unpack(&bytes[16 + nbytes..]);
        Self::new(kernels, rows, cols, bits, valid)
    }
}

/// Sign-quantizes the bank responses of `n`.
pub fn encode(n: &NormalizedIris, bank: &FilterBank) -> Result<IrisCode> {
    let responses = filter_responses(n, bank)?;
    let (rows, cols) = (n.rows(), n.cols());
    let total = bank.len() * rows * cols * 2;
    let mut bits = vec![false; total];
    let mut valid = vec![false; total];
    for (k, resp) in responses.iter().enumerate() {
        for r in 0..rows {
            for c in 0..cols {
                let src = r * cols + c;
                let base = ((k * rows + r) * 2) * cols + c;
                bits[base] = resp.re[src] > ZERO_THRESHOLD;
                bits[base + cols] = resp.im[src] > ZERO_THRESHOLD;
                valid[base] = resp.valid[src];
                valid[base + cols] = resp.valid[src];
            }
        }
    }
    IrisCode::new(bank.len(), rows, cols, bits, valid)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchScore {
    /// Fractional Hamming distance; similarity is `1 - distance`.
    pub distance: f64,
    /// Column shift applied to the second code at the minimum.
    pub shift: i32,
}

/// Masked fractional Hamming distance minimized over circular column shifts
/// in `[-max_shift, max_shift]`. Shift `s` compares column `c` of `a` with
/// column `c + s` of `b`; ties keep the smallest `|s|`, negative first.
pub fn hamming_distance(a: &IrisCode, b: &IrisCode, max_shift: usize) -> Result<MatchScore> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(format!(
            "code shapes {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let cols = a.cols;
    let planes = a.kernels * a.rows * 2;
    let max_shift = max_shift.min(cols / 2) as i32;
    let mut best: Option<MatchScore> = None;
    let shifts = std::iter::once(0).chain((1..=max_shift).flat_map(|s| [-s, s]));
    for s in shifts {
        let off = s.rem_euclid(cols as i32) as usize;
        let (mut differ, mut overlap) = (0usize, 0usize);
        for p in 0..planes {
            let base = p * cols;
            let (ab, av) = (&a.bits[base..base + cols], &a.valid[base..base + cols]);
            let (bb, bv) = (&b.bits[base..base + cols], &b.valid[base..base + cols]);
            for c in 0..cols {
                let j = if c + off >= cols {
                    c + off - cols
                } else {
                    c + off
                };
                if av[c] && bv[j] {
                    overlap += 1;
                    differ += usize::from(ab[c] != bb[j]);
                }
            }
        }
        if overlap == 0 {
            continue;
        }
        let distance = differ as f64 / overlap as f64;
        if best.is_none_or(|m| distance < m.distance) {
            best = Some(MatchScore { distance, shift: s });
        }
    }
    best.ok_or(Error::NoValidOverlap)
}

/// L1 distance between bank responses of two normalized blocks: for each
/// kernel, the mean of `|d re| + |d im|` over jointly valid cells, summed
/// over kernels.
pub fn filter_response_distance_normalized(
    a: &NormalizedIris,
    b: &NormalizedIris,
    bank: &FilterBank,
) -> Result<f64> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::DimensionMismatch(format!(
            "blocks {}x{} vs {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let ra = filter_responses(a, bank)?;
    let rb = filter_responses(b, bank)?;
    let mut total = 0.0;
    let mut any = false;
    for (x, y) in ra.iter().zip(&rb) {
        let (mut sum, mut count) = (0.0, 0usize);
        for i in 0..x.re.len() {
            if x.valid[i] && y.valid[i] {
                sum += (x.re[i] - y.re[i]).abs() + (x.im[i] - y.im[i]).abs();
                count += 1;
            }
        }
        if count > 0 {
            total += sum / count as f64;
            any = true;
        }
    }
    if any {
        Ok(total)
    } else {
        Err(Error::NoValidOverlap)
    }
}

/// Filter-based identity distance between two iris images, each normalized
/// to the default block under its own circles.
#[allow(clippy::too_many_arguments)]
pub fn filter_response_distance(
    img1: &GrayImage,
    mask1: &IrisMask,
    c1: &IrisCircles,
    img2: &GrayImage,
    mask2: &IrisMask,
    c2: &IrisCircles,
    bank: &FilterBank,
) -> Result<f64> {
    let a = rubber_sheet_normalize(img1, mask1, c1, DEFAULT_ROWS, DEFAULT_COLS)?;
    let b = rubber_sheet_normalize(img2, mask2, c2, DEFAULT_ROWS, DEFAULT_COLS)?;
    filter_response_distance_normalized(&a, &b, bank)
}

/// Normalizes at the default block size and encodes.
pub fn encode_image(
    img: &GrayImage,
    mask: &IrisMask,
    c: &IrisCircles,
    bank: &FilterBank,
) -> Result<IrisCode> {
    let n = rubber_sheet_normalize(img, mask, c, DEFAULT_ROWS, DEFAULT_COLS)?;
    encode(&n, bank)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise_block(seed: u64, rows: usize, cols: usize) -> NormalizedIris {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tex = (0..rows * cols).map(|_| rng.gen_range(0.0..1.0)).collect();
        NormalizedIris::new(rows, cols, tex, vec![true; rows * cols]).unwrap()
    }

    #[test]
    fn default_bank_shape_and_dc() {
        let bank = default_gabor_bank();
        assert_eq!(bank.len(), 6);
        for k in bank.kernels() {
            assert!(k.dc() < 1e-6, "{} dc {}", k.meta.name, k.dc());
            assert!(k.width() % 2 == 1 && k.height() % 2 == 1);
            assert!(k.height() <= DEFAULT_ROWS);
        }
    }

    #[test]
    fn wavelength_16_peaks_at_one_sixteenth() {
        // discrete sweep of the frequency response along the carrier axis
        let k = gabor_kernel(16.0, 0.0);
        let (mut best_f, mut best_mag) = (0.0, 0.0);
        for i in 1..=2000 {
            let f = 0.25 * i as f64 / 2000.0;
            let (re, im) = k.frequency_response(f, 0.0);
            let mag = re.hypot(im);
            if mag > best_mag {
                best_mag = mag;
                best_f = f;
            }
        }
        assert!(
            (best_f - 1.0 / 16.0).abs() / (1.0 / 16.0) < 0.05,
            "peak at {best_f}"
        );
    }

    #[test]
    fn constant_texture_codes_are_zero_and_fully_valid() {
        let n = NormalizedIris::new(64, 512, vec![0.5; 64 * 512], vec![true; 64 * 512]).unwrap();
        let code = encode(&n, &default_gabor_bank()).unwrap();
        assert!(code.bits().iter().all(|&b| !b));
        assert!(code.valid().iter().all(|&v| v));
    }

    #[test]
    fn angular_shift_shifts_code_planes() {
        let n = noise_block(3, 64, 512);
        let bank = default_gabor_bank();
        let a = encode(&n, &bank).unwrap();
        let k = 7;
        let b = encode(&n.rotated(k), &bank).unwrap();
        let mut mismatches = 0;
        for kernel in 0..6 {
            for r in 0..64 {
                for part in 0..2 {
                    for c in 0..512 {
                        let i = a.index(kernel, r, part, c);
                        let j = b.index(kernel, r, part, (c + k as usize) % 512);
                        mismatches += usize::from(a.bits()[i] != b.bits()[j]);
                    }
                }
            }
        }
        assert_eq!(mismatches, 0);
        let score = hamming_distance(&b, &a, 16).unwrap();
        assert_eq!(score.distance, 0.0);
        assert_eq!(score.shift, -(k as i32));
    }

    #[test]
    fn encode_is_deterministic() {
        let n = noise_block(5, 64, 512);
        let bank = default_gabor_bank();
        assert_eq!(encode(&n, &bank).unwrap(), encode(&n, &bank).unwrap());
    }

    #[test]
    fn kernel_taller_than_block_is_rejected() {
        let n = noise_block(1, 16, 512);
        assert!(matches!(
            encode(&n, &default_gabor_bank()),
            Err(Error::KernelTooLarge { .. })
        ));
    }

    #[test]
    fn hamming_identity_complement_and_errors() {
        let bank = default_gabor_bank();
        let code = encode(&noise_block(9, 64, 512), &bank).unwrap();
        assert_eq!(hamming_distance(&code, &code, 16).unwrap().distance, 0.0);
        let (k, r, c) = code.shape();
        let complement = IrisCode::new(
            k,
            r,
            c,
            code.bits().iter().map(|&b| !b).collect(),
            vec![true; code.bits().len()],
        )
        .unwrap();
        let all_valid =
            IrisCode::new(k, r, c, code.bits().to_vec(), vec![true; code.bits().len()]).unwrap();
        assert_eq!(
            hamming_distance(&all_valid, &complement, 0)
                .unwrap()
                .distance,
            1.0
        );
        let none = IrisCode::new(
            k,
            r,
            c,
            code.bits().to_vec(),
            vec![false; code.bits().len()],
        )
        .unwrap();
        assert!(matches!(
            hamming_distance(&none, &code, 4),
            Err(Error::NoValidOverlap)
        ));
        let small = IrisCode::new(1, 1, 1, vec![false; 2], vec![true; 2]).unwrap();
        assert!(matches!(
            hamming_distance(&small, &code, 4),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn random_codes_are_near_one_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 10_000;
        let mk = |rng: &mut ChaCha8Rng| {
            IrisCode::new(
                1,
                1,
                n / 2,
                (0..n).map(|_| rng.gen_bool(0.5)).collect(),
                vec![true; n],
            )
            .unwrap()
        };
        let a = mk(&mut rng);
        let b = mk(&mut rng);
        let d = hamming_distance(&a, &b, 0).unwrap().distance;
        // binomial(10000, 0.5): sd 0.005, the band is six sd wide on each side
        assert!((0.47..=0.53).contains(&d), "{d}");
    }

    #[test]
    fn code_bytes_round_trip() {
        let code = encode(&noise_block(2, 64, 512), &default_gabor_bank()).unwrap();
        assert_eq!(IrisCode::from_bytes(&code.to_bytes()).unwrap(), code);
        assert!(IrisCode::from_bytes(b"IRC1").is_err());
    }

    #[test]
    fn filter_distance_identity_and_symmetry() {
        let bank = default_gabor_bank();
        let a = noise_block(11, 64, 512);
        let b = noise_block(12, 64, 512);
        assert_eq!(
            filter_response_distance_normalized(&a, &a, &bank).unwrap(),
            0.0
        );
        assert_eq!(
            filter_response_distance_normalized(&a, &b, &bank).unwrap(),
            filter_response_distance_normalized(&b, &a, &bank).unwrap()
        );
    }

    #[test]
    fn bank_rejects_dc_and_loads_from_file() {
        let mut k = gabor_kernel(8.0, 0.0);
        k.re[0] += 0.5;
        assert!(FilterBank::new(vec![k]).is_err());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.ikf");
        let bank = default_gabor_bank();
        crate::kernels::save_kernels(&path, bank.kernels()).unwrap();
        let loaded = FilterBank::load(&path).unwrap();
        assert_eq!(loaded.len(), 6);
        for (a, b) in loaded.kernels().iter().zip(bank.kernels()) {
            assert!(a.dc() < 1e-6);
            assert!(a.re.iter().zip(&b.re).all(|(x, y)| (x - y).abs() < 1e-6));
        }
    }
}
