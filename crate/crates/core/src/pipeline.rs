//! Dataset curation, configuration, and composite workflows.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deformation::{deform_with_circles, BiomechParams, DeformationModel, ExternalDeformer};
use crate::error::{Error, Result};
use crate::geometry::{
    assign_bin, circular_target_mask, fit_circles, make_pairs, Binning, Circle, IrisCircles,
    ManifestRow, PairManifest, TrainingPair,
};
use crate::raster::{GrayImage, IrisMask};

pub const DEFAULT_CROP_SIZE: usize = 256;
pub const DEFAULT_CROP_PADDING: usize = 16;

/// Top-left corner of a `size x size` window centered on the iris center.
fn crop_origin(c: &IrisCircles, size: usize) -> (isize, isize) {
    let half = (size / 2) as isize;
    (
        c.iris.cx.round() as isize - half,
        c.iris.cy.round() as isize - half,
    )
}

fn check_crop(c: &IrisCircles, size: usize, padding: usize) -> Result<()> {
    let max = size as f64 / 2.0 - padding as f64;
    if max <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "crop size {size} must exceed twice the padding {padding}"
        )));
    }
    if c.iris.r > max {
        return Err(Error::IrisTooLarge { r: c.iris.r, max });
    }
    Ok(())
}

/// `size x size` window centered on the iris center; pixels beyond the frame
/// are zero. Returns the crop and the circles in crop coordinates.
pub fn center_crop(
    img: &GrayImage,
    c: &IrisCircles,
    size: usize,
    padding: usize,
) -> Result<(GrayImage, IrisCircles)> {
    check_crop(c, size, padding)?;
    let (ox, oy) = crop_origin(c, size);
    let (w, h) = (img.width() as isize, img.height() as isize);
    let out = GrayImage::from_fn(size, size, |x, y| {
        let (sx, sy) = (x as isize + ox, y as isize + oy);
        if sx >= 0 && sy >= 0 && sx < w && sy < h {
            img.get(sx as usize, sy as usize)
        } else {
            0
        }
    })?;
    Ok((out, c.translated(-ox as f64, -oy as f64)))
}

/// The mask counterpart of [`center_crop`]; outside pixels are unset.
pub fn center_crop_mask(
    mask: &IrisMask,
    c: &IrisCircles,
    size: usize,
    padding: usize,
) -> Result<IrisMask> {
    check_crop(c, size, padding)?;
    let (ox, oy) = crop_origin(c, size);
    let (w, h) = (mask.width() as isize, mask.height() as isize);
    IrisMask::from_fn(size, size, |x, y| {
        let (sx, sy) = (x as isize + ox, y as isize + oy);
        sx >= 0 && sy >= 0 && sx < w && sy < h && mask.get(sx as usize, sy as usize)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub manifest_path: PathBuf,
    pub output_dir: PathBuf,
    pub binning: Binning,
    pub crop_size: usize,
    pub crop_padding: usize,
}

impl DatasetConfig {
    pub fn new(manifest_path: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            manifest_path: manifest_path.into(),
            output_dir: output_dir.into(),
            binning: Binning::default(),
            crop_size: DEFAULT_CROP_SIZE,
            crop_padding: DEFAULT_CROP_PADDING,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.crop_size <= 2 * self.crop_padding {
            return Err(Error::InvalidParameter(format!(
                "crop size {} must exceed twice the padding {}",
                self.crop_size, self.crop_padding
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "detail", rename_all = "lowercase")]
pub enum ItemStatus {
    Ok,
    /// Ratio outside the binning range.
    Dropped(String),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobResult {
    pub outputs: Vec<PathBuf>,
    /// One entry per input row, in manifest order.
    pub statuses: Vec<ItemStatus>,
    pub elapsed: Duration,
}

impl JobResult {
    pub fn elapsed_ms(&self) -> u128 {
        self.elapsed.as_millis()
    }

    pub fn failed(&self) -> usize {
        self.statuses
            .iter()
            .filter(|s| matches!(s, ItemStatus::Failed(_)))
            .count()
    }
}

/// Curated output: the cropped manifest and its cross-bin pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Curation {
    pub manifest: PairManifest,
    pub pairs: Vec<TrainingPair>,
    pub result: JobResult,
}

/// Crops every manifest row around its iris, drops rows whose ratio falls
/// outside the binning range, and pairs the survivors across bins.
///
/// The iris center comes from a circle fit on the mask; radii and the ratio
/// come from the manifest. Output layout under `output_dir`:
/// `images/NNNNN.png`, `masks/NNNNN.png` (NNNNN is the input row index),
/// `manifest.csv`, `pairs.csv`, and `status.csv`. A failing row is recorded
/// in its status and never aborts the batch. No file depends on timing, so a
/// re-run reproduces every file byte for byte.
pub fn run_curation(cfg: &DatasetConfig, jobs: usize) -> Result<Curation> {
    let start = Instant::now();
    cfg.validate()?;
    let manifest = PairManifest::read_csv(&cfg.manifest_path)?;
    let base = cfg
        .manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let images = cfg.output_dir.join("images");
    let masks = cfg.output_dir.join("masks");
    for dir in [&images, &masks] {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let process = |(i, row): (usize, &ManifestRow)| -> (ItemStatus, Option<ManifestRow>) {
        if let Err(e) = assign_bin(row.ratio(), &cfg.binning) {
            return (ItemStatus::Dropped(e.to_string()), None);
        }
        match curate_row(i, row, &base, &images, &masks, cfg) {
            Ok(curated) => (ItemStatus::Ok, Some(curated)),
            Err(e) => (ItemStatus::Failed(format!("{}: {e}", e.name())), None),
        }
    };
    let results: Vec<(ItemStatus, Option<ManifestRow>)> = if jobs == 1 {
        manifest.rows.iter().enumerate().map(process).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
        pool.install(|| manifest.rows.par_iter().enumerate().map(process).collect())
    };

    let mut statuses = Vec::with_capacity(results.len());
    let mut rows = Vec::new();
    for (status, row) in results {
        statuses.push(status);
        rows.extend(row);
    }
    let curated = PairManifest::new(rows)?;
    let pairs = make_pairs(&curated, &cfg.binning);

    let manifest_out = cfg.output_dir.join("manifest.csv");
    curated.write_csv(&manifest_out)?;
    let pairs_out = cfg.output_dir.join("pairs.csv");
    write_pairs(&pairs_out, &curated, &pairs)?;
    let status_out = cfg.output_dir.join("status.csv");
    write_statuses(&status_out, &manifest, &statuses)?;

    let mut outputs: Vec<PathBuf> = curated
        .rows
        .iter()
        .flat_map(|r| {
            [
                cfg.output_dir.join(&r.image_path),
                cfg.output_dir.join(&r.mask_path),
            ]
        })
        .collect();
    outputs.extend([manifest_out, pairs_out, status_out]);
    Ok(Curation {
        manifest: curated,
        pairs,
        result: JobResult {
            outputs,
            statuses,
            elapsed: start.elapsed(),
        },
    })
}

fn curate_row(
    index: usize,
    row: &ManifestRow,
    base: &Path,
    images: &Path,
    masks: &Path,
    cfg: &DatasetConfig,
) -> Result<ManifestRow> {
    let img = GrayImage::load_png(base.join(&row.image_path))?;
    let mask = IrisMask::load_png(base.join(&row.mask_path))?;
    if !img.same_dims(&mask) {
        return Err(Error::DimensionMismatch(format!(
            "image {}x{} vs mask {}x{}",
            img.width(),
            img.height(),
            mask.width(),
            mask.height()
        )));
    }
    let fit = fit_circles(&mask)?;
    let circles = IrisCircles::new(
        Circle::new(fit.pupil.cx, fit.pupil.cy, row.pupil_radius)?,
        Circle::new(fit.iris.cx, fit.iris.cy, row.iris_radius)?,
    )?;
    let (crop, _) = center_crop(&img, &circles, cfg.crop_size, cfg.crop_padding)?;
    let crop_mask = center_crop_mask(&mask, &circles, cfg.crop_size, cfg.crop_padding)?;
    let name = format!("{index:05}.png");
    crop.save_png(images.join(&name))?;
    crop_mask.save_png(masks.join(&name))?;
    Ok(ManifestRow {
        image_path: format!("images/{name}"),
        mask_path: format!("masks/{name}"),
        ..row.clone()
    })
}

#[derive(Serialize)]
struct PairLine<'a> {
    input: &'a str,
    target: &'a str,
    input_bin: usize,
    target_bin: usize,
    input_ratio: f64,
    target_ratio: f64,
}

/// CSV `input,target,input_bin,target_bin,input_ratio,target_ratio` with image paths.
pub fn write_pairs(path: &Path, m: &PairManifest, pairs: &[TrainingPair]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    if pairs.is_empty() {
        w.write_record([
            "input",
            "target",
            "input_bin",
            "target_bin",
            "input_ratio",
            "target_ratio",
        ])?;
    }
    for p in pairs {
        let (a, b) = (&m.rows[p.input], &m.rows[p.target]);
        w.serialize(PairLine {
            input: &a.image_path,
            target: &b.image_path,
            input_bin: p.input_bin,
            target_bin: p.target_bin,
            input_ratio: a.ratio(),
            target_ratio: b.ratio(),
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_statuses(path: &Path, m: &PairManifest, statuses: &[ItemStatus]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["row", "image", "status", "detail"])?;
    for (i, (row, s)) in m.rows.iter().zip(statuses).enumerate() {
        let (status, detail) = match s {
            ItemStatus::Ok => ("ok", ""),
            ItemStatus::Dropped(d) => ("dropped", d.as_str()),
            ItemStatus::Failed(d) => ("failed", d.as_str()),
        };
        w.write_record([i.to_string().as_str(), &row.image_path, status, detail])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Settings file (TOML). Every key is optional; command-line flags take
/// precedence over the file.
///
/// ```toml
/// seed = 7
/// model = "biomech"
/// alpha = 0.35
/// bins = "0.2,0.7,0.1"
/// jobs = 4
/// crop_size = 256
/// crop_padding = 16
/// external_url = "http://127.0.0.1:8500/deform"
/// external_timeout_ms = 30000
/// bootstrap_fraction = 0.1
/// bootstrap_iterations = 100
/// max_shift = 16
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub model: Option<String>,
    pub alpha: Option<f64>,
    pub bins: Option<String>,
    pub jobs: Option<usize>,
    pub crop_size: Option<usize>,
    pub crop_padding: Option<usize>,
    pub external_url: Option<String>,
    pub external_timeout_ms: Option<u64>,
    pub bootstrap_fraction: Option<f64>,
    pub bootstrap_iterations: Option<usize>,
    pub max_shift: Option<usize>,
    pub biomech_nu: Option<f64>,
}

pub const DEFAULT_EXTERNAL_TIMEOUT_MS: u64 = 30_000;

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidParameter(format!("config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Fields set in `flags` replace the ones here.
    pub fn merged(&self, flags: &Config) -> Config {
        macro_rules! pick {
            ($($f:ident),*) => { Config { $($f: flags.$f.clone().or_else(|| self.$f.clone())),* } };
        }
        pick!(
            seed,
            model,
            alpha,
            bins,
            jobs,
            crop_size,
            crop_padding,
            external_url,
            external_timeout_ms,
            bootstrap_fraction,
            bootstrap_iterations,
            max_shift,
            biomech_nu
        )
    }

    pub fn binning(&self) -> Result<Binning> {
        self.bins
            .as_deref()
            .map_or(Ok(Binning::default()), str::parse)
    }

    /// Resolves a model name (`linear`, `biomech`, `external`); the external
    /// model needs `external_url`.
    pub fn model(&self, name: Option<&str>) -> Result<DeformationModel> {
        let name = name.or(self.model.as_deref()).unwrap_or("linear");
        match name {
            "linear" => Ok(DeformationModel::Linear),
            "biomech" | "biomechanical" => {
                let mut p = BiomechParams::default();
                if let Some(nu) = self.biomech_nu {
                    p.nu = nu;
                }
                p.validate()?;
                Ok(DeformationModel::Biomechanical(p))
            }
            "external" => {
                let url = self.external_url.as_deref().ok_or_else(|| {
                    Error::ExternalUnavailable("no external deformer endpoint configured".into())
                })?;
                let timeout = Duration::from_millis(
                    self.external_timeout_ms
                        .unwrap_or(DEFAULT_EXTERNAL_TIMEOUT_MS),
                );
                Ok(DeformationModel::External(ExternalDeformer::new(
                    url, timeout,
                )?))
            }
            other => Err(Error::InvalidParameter(format!(
                "unknown model '{other}' (expected linear, biomech or external)"
            ))),
        }
    }
}

/// Result of [`rectify`].
#[derive(Debug, Clone)]
pub struct Rectified {
    pub image: GrayImage,
    pub mask: IrisMask,
    pub source: IrisCircles,
    pub target: IrisCircles,
}

/// Reshapes an irregular pupil into a circle concentric with the iris at
/// pupil-to-iris ratio `alpha`. `eyelid` is the eyelid opening; `None`
/// treats the whole frame as open.
pub fn rectify(
    img: &GrayImage,
    mask: &IrisMask,
    alpha: f64,
    model: &DeformationModel,
    eyelid: Option<&IrisMask>,
) -> Result<Rectified> {
    let source = fit_circles(mask)?;
    let open;
    let eyelid = match eyelid {
        Some(e) => e,
        None => {
            open = IrisMask::full(mask.width(), mask.height())?;
            &open
        }
    };
    let target_mask = circular_target_mask(&source, alpha, eyelid)?;
    let target = IrisCircles::new(source.iris.with_radius(alpha * source.iris.r)?, source.iris)?;
    let (image, mask) = match model {
        DeformationModel::External(_) => {
            crate::deformation::deform(img, mask, &target_mask, model)?
        }
        _ => deform_with_circles(img, mask, &source, &target_mask, &target, model)?,
    };
    Ok(Rectified {
        image,
        mask,
        source,
        target,
    })
}
