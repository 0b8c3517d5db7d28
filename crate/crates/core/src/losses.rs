//! Training objectives as plain numerical functions.
//!
//! Identity terms operate on embeddings, realism terms on images. Every
//! pairwise loss implements [`PairwiseLoss`], which is what [`triplet_wrap`]
//! composes; host training stacks plug perceptual or adversarial losses in
//! through the same trait.

use std::path::Path;

use rayon::prelude::*;

use crate::deformation::NormalizedIris;
use crate::error::{Error, Result};
use crate::kernels::{load_kernels, Kernel};
use crate::raster::GrayImage;
use crate::recognition::{filter_response_distance_normalized, FilterBank};

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    values: Vec<f64>,
}

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("embedding has no entries".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "embedding has non-finite entries".into(),
            ));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        dot(&self.values, &self.values).sqrt()
    }

    pub fn scaled(&self, k: f64) -> Result<Self> {
        Self::new(self.values.iter().map(|v| v * k).collect())
    }

    pub fn negated(&self) -> Self {
        Self {
            values: self.values.iter().map(|v| -v).collect(),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `0.5 * (1 - cos(v1, v2))`, in `[0, 1]`.
pub fn cosine_loss(v1: &Embedding, v2: &Embedding) -> Result<f64> {
    if v1.dim() != v2.dim() {
        return Err(Error::DimMismatch(v1.dim(), v2.dim()));
    }
    let n1 = dot(&v1.values, &v1.values);
    let n2 = dot(&v2.values, &v2.values);
    if n1 == 0.0 || n2 == 0.0 {
        return Err(Error::ZeroNorm);
    }
    // sqrt(n1 * n2) rather than |v1| * |v2|: exact when v2 = +-v1
    let cos = (dot(&v1.values, &v2.values) / (n1 * n2).sqrt()).clamp(-1.0, 1.0);
    Ok(0.5 * (1.0 - cos))
}

/// Embeddings of the output, target, positive, input and negative images.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityQuintuple {
    pub output: Embedding,
    pub target: Embedding,
    pub positive: Embedding,
    pub input: Embedding,
    pub negative: Embedding,
}

impl IdentityQuintuple {
    pub fn new(
        output: Embedding,
        target: Embedding,
        positive: Embedding,
        input: Embedding,
        negative: Embedding,
    ) -> Result<Self> {
        let d = output.dim();
        for e in [&target, &positive, &input, &negative] {
            if e.dim() != d {
                return Err(Error::DimMismatch(d, e.dim()));
            }
        }
        Ok(Self {
            output,
            target,
            positive,
            input,
            negative,
        })
    }
}

/// Identity loss of the deformer output.
///
/// `Lcos(O,T) + Lcos(O,P) + max(Lcos(O,I) - m_IT, 0) + max(m_NT - Lcos(O,N), 0)`
/// with `m_IT = Lcos(I,T)` and `m_NT = Lcos(N,T)`: the output must end up no
/// farther from the input than the target is, and no closer to the impostor
/// than the target is.
pub fn autoencoder_identity_loss(q: &IdentityQuintuple) -> Result<f64> {
    let margin_it = cosine_loss(&q.input, &q.target)?;
    let margin_nt = cosine_loss(&q.negative, &q.target)?;
    let to_target = cosine_loss(&q.output, &q.target)?;
    let to_positive = cosine_loss(&q.output, &q.positive)?;
    let to_input = cosine_loss(&q.output, &q.input)?;
    let to_negative = cosine_loss(&q.output, &q.negative)?;
    Ok(to_target
        + to_positive
        + (to_input - margin_it).max(0.0)
        + (margin_nt - to_negative).max(0.0))
}

/// Batch form, parallel over items.
pub fn autoencoder_identity_loss_batch(items: &[IdentityQuintuple]) -> Result<Vec<f64>> {
    items.par_iter().map(autoencoder_identity_loss).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscriminatorMargins {
    pub margin_d: f64,
}

impl DiscriminatorMargins {
    pub fn new(margin_d: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&margin_d) {
            return Err(Error::InvalidParameter(format!(
                "margin_D {margin_d} outside [0, 1]"
            )));
        }
        Ok(Self { margin_d })
    }
}

/// Discriminator-side identity loss.
///
/// A triplet term `max(Lcos(T,P) - Lcos(T,N) + margin_D, 0)` trains the
/// embedding, and the output is pushed at least `m_NTP` away from target,
/// positive and negative, where `m_NTP = max(Lcos(N,T), Lcos(N,P))`
/// estimates the impostor-level loss.
pub fn discriminator_identity_loss(
    e_o: &Embedding,
    e_t: &Embedding,
    e_p: &Embedding,
    e_n: &Embedding,
    m: &DiscriminatorMargins,
) -> Result<f64> {
    let triplet = (cosine_loss(e_t, e_p)? - cosine_loss(e_t, e_n)? + m.margin_d).max(0.0);
    let margin_ntp = cosine_loss(e_n, e_t)?.max(cosine_loss(e_n, e_p)?);
    let mut hinge = 0.0;
    for x in [e_t, e_p, e_n] {
        hinge += (margin_ntp - cosine_loss(e_o, x)?).max(0.0);
    }
    Ok(triplet + hinge)
}

/// A non-negative loss between two operands with `loss(x, x) == 0`.
/// Closures `Fn(&T, &T) -> Result<f64>` implement it too.
pub trait PairwiseLoss<T: ?Sized> {
    fn loss(&self, a: &T, b: &T) -> Result<f64>;
}

impl<T: ?Sized, F> PairwiseLoss<T> for F
where
    F: Fn(&T, &T) -> Result<f64>,
{
    fn loss(&self, a: &T, b: &T) -> Result<f64> {
        self(a, b)
    }
}

/// Wraps a pairwise loss into the triplet form
/// `base(O,T) + max(base(T,N) - base(O,N), 0)`: the target-to-impostor loss
/// acts as the margin the output must keep from the impostor.
pub fn triplet_wrap<T: ?Sized, L: PairwiseLoss<T> + ?Sized>(
    base: &L,
    o: &T,
    t: &T,
    n: &T,
) -> Result<f64> {
    let ot = base.loss(o, t)?;
    let margin = base.loss(t, n)?;
    let on = base.loss(o, n)?;
    Ok(ot + (margin - on).max(0.0))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CosineLoss;

impl PairwiseLoss<Embedding> for CosineLoss {
    fn loss(&self, a: &Embedding, b: &Embedding) -> Result<f64> {
        cosine_loss(a, b)
    }
}

/// Filter-response distance between normalized irises.
#[derive(Debug, Clone)]
pub struct FilterIdentityLoss {
    pub bank: FilterBank,
}

impl PairwiseLoss<NormalizedIris> for FilterIdentityLoss {
    fn loss(&self, a: &NormalizedIris, b: &NormalizedIris) -> Result<f64> {
        filter_response_distance_normalized(a, b, &self.bank)
    }
}

/// `1 - ms_ssim(a, b)`.
#[derive(Debug, Clone, Copy)]
pub struct MsSsimLoss {
    pub scales: usize,
}

impl Default for MsSsimLoss {
    fn default() -> Self {
        Self {
            scales: MS_SSIM_SCALES,
        }
    }
}

impl PairwiseLoss<GrayImage> for MsSsimLoss {
    fn loss(&self, a: &GrayImage, b: &GrayImage) -> Result<f64> {
        Ok(1.0 - ms_ssim(a, b, self.scales)?)
    }
}

/// [`sharpness_loss`] with the first operand as the output image.
#[derive(Debug, Clone, Default)]
pub struct SharpnessLoss {
    pub metric: IsoSharpness,
}

impl PairwiseLoss<GrayImage> for SharpnessLoss {
    fn loss(&self, out_img: &GrayImage, in_img: &GrayImage) -> Result<f64> {
        Ok((self.metric.score(in_img)? - self.metric.score(out_img)?).max(0.0))
    }
}

pub const MS_SSIM_SCALES: usize = 5;
const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const SSIM_C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

/// Multi-scale structural similarity with an 11-tap Gaussian window
/// (sigma 1.5), `K1 = 0.01`, `K2 = 0.03`, dynamic range 255, and 2x2
/// average-pool downsampling between scales. Fewer than five scales use the
/// leading weights, renormalized. Negative per-scale contrast-structure
/// means are clamped to zero so the result stays in `[0, 1]`.
pub fn ms_ssim(a: &GrayImage, b: &GrayImage, scales: usize) -> Result<f64> {
    if scales == 0 || scales > MS_SSIM_WEIGHTS.len() {
        return Err(Error::InvalidParameter(format!(
            "scales must be in 1..=5, got {scales}"
        )));
    }
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let min = SSIM_WINDOW << (scales - 1);
    if a.width() < min || a.height() < min {
        return Err(Error::TooSmall {
            width: a.width(),
            height: a.height(),
            min,
        });
    }
    let weights = &MS_SSIM_WEIGHTS[..scales];
    let wsum: f64 = weights.iter().sum();
    let window = crate::raster::gaussian_kernel_1d(SSIM_SIGMA, SSIM_WINDOW / 2);

    let (mut w, mut h) = (a.width(), a.height());
    let mut x = a.to_f64();
    let mut y = b.to_f64();
    let mut score = 1.0;
    for (s, &weight) in weights.iter().enumerate() {
        let (l, cs) = ssim_terms(&x, &y, w, h, &window);
        let last = s + 1 == scales;
        let term = if last { l * cs } else { cs };
        score *= term.max(0.0).powf(weight / wsum);
        if !last {
            x = downsample(&x, w, h);
            y = downsample(&y, w, h);
            w /= 2;
            h /= 2;
        }
    }
    Ok(score)
}

/// Mean luminance and contrast-structure terms over the valid window positions.
fn ssim_terms(x: &[f64], y: &[f64], w: usize, h: usize, window: &[f64]) -> (f64, f64) {
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let (mx, ow, oh) = filter_valid(x, w, h, window);
    let (my, ..) = filter_valid(y, w, h, window);
    let (sxx, ..) = filter_valid(&xx, w, h, window);
    let (syy, ..) = filter_valid(&yy, w, h, window);
    let (sxy, ..) = filter_valid(&xy, w, h, window);
    let (mut l_sum, mut cs_sum) = (0.0, 0.0);
    for i in 0..ow * oh {
        let vx = sxx[i] - mx[i] * mx[i];
        let vy = syy[i] - my[i] * my[i];
        let cov = sxy[i] - mx[i] * my[i];
        l_sum += (2.0 * mx[i] * my[i] + SSIM_C1) / (mx[i] * mx[i] + my[i] * my[i] + SSIM_C1);
        cs_sum += (2.0 * cov + SSIM_C2) / (vx + vy + SSIM_C2);
    }
    let n = (ow * oh) as f64;
    (l_sum / n, cs_sum / n)
}

/// Separable filtering without padding.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64]) -> (Vec<f64>, usize, usize) {
    let (ow, oh) = (w + 1 - k.len(), h + 1 - k.len());
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * src[y * w + x + i])
                .sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * tmp[(y + i) * ow + x])
                .sum();
        }
    }
    (out, ow, oh)
}

fn downsample(src: &[f64], w: usize, h: usize) -> Vec<f64> {
    let (ow, oh) = (w / 2, h / 2);
    let mut out = Vec::with_capacity(ow * oh);
    for y in 0..oh {
        for x in 0..ow {
            let i = 2 * y * w + 2 * x;
            out.push((src[i] + src[i + 1] + src[i + w] + src[i + w + 1]) / 4.0);
        }
    }
    out
}

/// Default power constant of the sharpness mapping; images whose band-pass
/// power equals it score 50.
pub const DEFAULT_SHARPNESS_C: f64 = 1.0e6;

/// Band-pass sharpness score in `[0, 100)`.
///
/// The image is filtered (valid positions only) with a zero-sum kernel,
/// `p` is the mean squared response, and the score is
/// `100 * p^2 / (p^2 + c^2)`. The default kernel is a 9x9
/// difference of Gaussians (sigma 1 and 2 px) scaled by 256 and rounded to
/// integer taps, with the center tap absorbing the rounding residue so the
/// taps sum to exactly zero. Another kernel can be loaded from a kernel
/// container; only its real plane is used.
#[derive(Debug, Clone, PartialEq)]
pub struct IsoSharpness {
    size: usize,
    taps: Vec<f64>,
    c: f64,
}

impl Default for IsoSharpness {
    fn default() -> Self {
        Self::dog(9, 1.0, 2.0, DEFAULT_SHARPNESS_C)
    }
}

impl IsoSharpness {
    fn dog(size: usize, s1: f64, s2: f64, c: f64) -> Self {
        let half = (size / 2) as f64;
        let g = |d2: f64, s: f64| (-d2 / (2.0 * s * s)).exp() / (std::f64::consts::TAU * s * s);
        let mut taps: Vec<f64> = (0..size * size)
            .map(|i| {
                let (x, y) = ((i % size) as f64 - half, (i / size) as f64 - half);
                let d2 = x * x + y * y;
                (256.0 * (g(d2, s1) - g(d2, s2))).round()
            })
            .collect();
        let center = size * size / 2;
        let sum: f64 = taps.iter().sum();
        taps[center] -= sum;
        Self { size, taps, c }
    }

    /// Uses the real plane of a square, zero-sum kernel.
    pub fn from_kernel(k: &Kernel, c: f64) -> Result<Self> {
        if k.width() != k.height() {
            return Err(Error::KernelFormat(
                "sharpness kernel must be square".into(),
            ));
        }
        let sum: f64 = k.re.iter().sum();
        let mass: f64 = k.re.iter().map(|v| v.abs()).sum();
        if sum.abs() > 1e-6 * mass.max(1.0) {
            return Err(Error::KernelFormat(format!(
                "sharpness kernel sums to {sum:.3e}"
            )));
        }
        Self::new_raw(k.width(), k.re.clone(), c)
    }

    /// Loads the first kernel of a kernel container.
    pub fn load(path: impl AsRef<Path>, c: f64) -> Result<Self> {
        let kernels = load_kernels(path)?;
        let k = kernels
            .first()
            .ok_or_else(|| Error::KernelFormat("kernel file is empty".into()))?;
        Self::from_kernel(k, c)
    }

    fn new_raw(size: usize, taps: Vec<f64>, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sharpness constant {c} must be positive"
            )));
        }
        Ok(Self { size, taps, c })
    }

    pub fn with_c(mut self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sharpness constant {c} must be positive"
            )));
        }
        self.c = c;
        Ok(self)
    }

    pub fn kernel_size(&self) -> usize {
        self.size
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// Mean squared band-pass response over valid positions.
    pub fn power(&self, img: &GrayImage) -> Result<f64> {
        let (w, h, k) = (img.width(), img.height(), self.size);
        if w < k || h < k {
            return Err(Error::TooSmall {
                width: w,
                height: h,
                min: k,
            });
        }
        let px = img.pixels();
        let (ow, oh) = (w + 1 - k, h + 1 - k);
        let mut acc = 0.0;
        for y in 0..oh {
            for x in 0..ow {
                let mut r = 0.0;
                for j in 0..k {
                    let row = &px[(y + j) * w + x..(y + j) * w + x + k];
                    for (p, t) in row.iter().zip(&self.taps[j * k..(j + 1) * k]) {
                        r += f64::from(*p) * t;
                    }
                }
                acc += r * r;
            }
        }
        Ok(acc / (ow * oh) as f64)
    }

    pub fn score(&self, img: &GrayImage) -> Result<f64> {
        let p = self.power(img)?;
        Ok(100.0 * p * p / (p * p + self.c * self.c))
    }
}

/// Sharpness score with the default metric.
pub fn iso_sharpness(img: &GrayImage) -> Result<f64> {
    IsoSharpness::default().score(img)
}

/// `max(iso_sharpness(in) - iso_sharpness(out), 0)`: the output may not be
/// blurrier than the input.
pub fn sharpness_loss(out_img: &GrayImage, in_img: &GrayImage) -> Result<f64> {
    SharpnessLoss::default().loss(out_img, in_img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::IrisCircles;
    use crate::raster::gaussian_blur;
    use crate::synth::{render_iris, IrisTexture};

    fn emb(v: &[f64]) -> Embedding {
        Embedding::new(v.to_vec()).unwrap()
    }

    fn texture_image(seed: u64) -> GrayImage {
        let c = IrisCircles::concentric(128.0, 128.0, 40.0, 110.0).unwrap();
        render_iris(&IrisTexture::random(seed), &c, 256, 256, |u| u)
            .unwrap()
            .0
    }

    #[test]
    fn cosine_loss_reference_values() {
        let a = emb(&[1.0, 2.0, -3.0]);
        assert_eq!(cosine_loss(&a, &a).unwrap(), 0.0);
        assert_eq!(cosine_loss(&a, &a.negated()).unwrap(), 1.0);
        assert_eq!(
            cosine_loss(&emb(&[1.0, 0.0]), &emb(&[0.0, 5.0])).unwrap(),
            0.5
        );
        assert!(matches!(
            cosine_loss(&a, &emb(&[1.0])),
            Err(Error::DimMismatch(3, 1))
        ));
        assert!(matches!(
            cosine_loss(&a, &emb(&[0.0; 3])),
            Err(Error::ZeroNorm)
        ));
    }

    #[test]
    fn autoencoder_loss_hand_case() {
        let t = emb(&[1.0, 0.0]);
        let q = IdentityQuintuple::new(
            emb(&[0.0, 1.0]),
            t.clone(),
            t.clone(),
            t.clone(),
            t.negated(),
        )
        .unwrap();
        assert_eq!(autoencoder_identity_loss(&q).unwrap(), 2.0);
    }

    #[test]
    fn discriminator_loss_hand_cases() {
        let t = emb(&[0.3, -0.4, 1.2]);
        let m = DiscriminatorMargins::new(0.2).unwrap();
        let v = discriminator_identity_loss(&t.negated(), &t, &t, &t.negated(), &m).unwrap();
        assert!((v - 1.0).abs() < 1e-9);
        let z = DiscriminatorMargins::new(0.0).unwrap();
        assert_eq!(
            discriminator_identity_loss(&t, &t, &t, &t, &z).unwrap(),
            0.0
        );
        assert!(DiscriminatorMargins::new(-0.1).is_err());
    }

    #[test]
    fn triplet_wrap_substitutions() {
        let t = emb(&[1.0, 0.5]);
        let n = emb(&[-0.2, 1.0]);
        assert_eq!(triplet_wrap(&CosineLoss, &t, &t, &n).unwrap(), 0.0);
        let base = cosine_loss(&t, &n).unwrap();
        let v = triplet_wrap(&CosineLoss, &n, &t, &n).unwrap();
        assert!((v - 2.0 * base).abs() < 1e-15);
        let closure = |a: &f64, b: &f64| -> Result<f64> { Ok((a - b).abs()) };
        assert_eq!(triplet_wrap(&closure, &1.0, &1.0, &4.0).unwrap(), 0.0);
        assert_eq!(triplet_wrap(&closure, &0.0, &1.0, &4.0).unwrap(), 1.0);
    }

    #[test]
    fn ms_ssim_identity_symmetry_and_size() {
        let a = texture_image(1);
        let b = gaussian_blur(&a, 1.0);
        assert_eq!(ms_ssim(&a, &a, 5).unwrap(), 1.0);
        assert_eq!(ms_ssim(&a, &b, 5).unwrap(), ms_ssim(&b, &a, 5).unwrap());
        assert!(ms_ssim(&a, &b, 5).unwrap() < 1.0);
        let small = GrayImage::new(100, 100).unwrap();
        assert!(matches!(
            ms_ssim(&small, &small, 5),
            Err(Error::TooSmall { min: 176, .. })
        ));
        assert!(ms_ssim(&small, &small, 3).is_ok());
    }

    #[test]
    fn sharpness_constant_blur_and_loss() {
        let flat = GrayImage::from_fn(64, 64, |_, _| 137).unwrap();
        assert_eq!(iso_sharpness(&flat).unwrap(), 0.0);
        let sharp = texture_image(4);
        let blurred = gaussian_blur(&sharp, 2.0);
        let (s0, s1) = (
            iso_sharpness(&sharp).unwrap(),
            iso_sharpness(&blurred).unwrap(),
        );
        assert!(s0 > s1 && s0 < 100.0, "{s0} {s1}");
        assert_eq!(sharpness_loss(&sharp, &sharp).unwrap(), 0.0);
        assert_eq!(sharpness_loss(&sharp, &blurred).unwrap(), 0.0);
        assert!(sharpness_loss(&blurred, &sharp).unwrap() > 0.0);
        assert!(iso_sharpness(&GrayImage::new(5, 5).unwrap()).is_err());
    }

    #[test]
    fn default_sharpness_kernel_is_integer_and_zero_sum() {
        let m = IsoSharpness::default();
        assert_eq!(m.kernel_size(), 9);
        assert_eq!(m.taps().iter().sum::<f64>(), 0.0);
        assert!(m.taps().iter().all(|t| t.fract() == 0.0));
    }

    #[test]
    fn sharpness_kernel_loads_from_container() {
        let m = IsoSharpness::default();
        let meta = crate::kernels::KernelMeta {
            width: 9,
            height: 9,
            wavelength: 0.0,
            orientation: 0.0,
            name: "dog".into(),
        };
        let k = Kernel::new(meta, m.taps().to_vec(), vec![0.0; 81]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("iso.ikf");
        crate::kernels::save_kernels(&path, &[k]).unwrap();
        let loaded = IsoSharpness::load(&path, DEFAULT_SHARPNESS_C).unwrap();
        assert_eq!(loaded, m);
    }
}
