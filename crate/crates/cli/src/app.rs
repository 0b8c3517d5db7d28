//! Command-line front end. Exit status: 0 success, 1 usage error, 2 data error.

use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use irisdeform::deformation::deform;
use irisdeform::evaluation::{
    auc, bootstrap_auc, decidability, delta_binned_report, read_scores, render_report_table,
    score_histogram, write_report_csv, BootstrapConfig, DeltaReport,
};
use irisdeform::geometry::{
    circular_target_mask, fit_circles, target_mask_constrict, target_mask_dilate,
};
use irisdeform::pipeline::{rectify, run_curation, Config, DatasetConfig, ItemStatus};
use irisdeform::recognition::{
    default_gabor_bank, encode_image, filter_response_distance, hamming_distance, FilterBank,
    DEFAULT_MAX_SHIFT,
};
use irisdeform::synth::{carve_pupil_ellipse, render_iris, IrisTexture};
use irisdeform::{Error, GrayImage, IrisCircles, IrisMask};
use serde::Serialize;

use crate::server::{self, ServiceState};

#[derive(Debug, Parser)]
#[command(
    name = "irisdeform",
    version,
    about = "Iris deformation, matching and evaluation"
)]
struct Cli {
    /// TOML settings file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for batch stages (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Crop, filter and pair a dataset manifest.
    Curate(CurateArgs),
    /// Deform an iris image to a target mask.
    Deform(DeformArgs),
    /// Build a target mask by dilation, constriction or a circular pupil.
    MaskTarget(MaskTargetArgs),
    /// Give an irregular pupil a circular shape at ratio alpha.
    Rectify(RectifyArgs),
    /// Write the iris code of an image.
    Encode(EncodeArgs),
    /// Compare two iris images.
    Match(MatchArgs),
    /// Bootstrap AUC, d' and delta-binned tables from score files.
    Evaluate(EvaluateArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Render a synthetic iris image and mask.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelArg {
    Linear,
    Biomech,
    External,
}

impl ModelArg {
    fn name(self) -> &'static str {
        match self {
            ModelArg::Linear => "linear",
            ModelArg::Biomech => "biomech",
            ModelArg::External => "external",
        }
    }
}

#[derive(Debug, Args)]
struct ModelOpts {
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    /// Endpoint of the external deformer.
    #[arg(long)]
    external_url: Option<String>,
}

#[derive(Debug, Args)]
struct CurateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Ratio bins as lo,hi,width.
    #[arg(long)]
    bins: Option<String>,
    #[arg(long)]
    crop_size: Option<usize>,
    #[arg(long)]
    crop_padding: Option<usize>,
}

#[derive(Debug, Args)]
struct DeformArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    model: ModelOpts,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MaskOp {
    Dilate,
    Constrict,
    Circular,
}

#[derive(Debug, Args)]
struct MaskTargetArgs {
    #[arg(long)]
    mask: PathBuf,
    #[arg(long, value_enum)]
    op: MaskOp,
    /// New pupil radius in pixels (dilate, constrict).
    #[arg(long)]
    radius: Option<f64>,
    /// Pupil-to-iris ratio (circular).
    #[arg(long)]
    alpha: Option<f64>,
    /// Eyelid-opening mask; defaults to the whole frame.
    #[arg(long)]
    eyelid: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RectifyArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    eyelid: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    model: ModelOpts,
}

#[derive(Debug, Args)]
struct EncodeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    /// Kernel container replacing the default Gabor bank.
    #[arg(long)]
    kernels: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MatchArgs {
    #[arg(long)]
    image_a: PathBuf,
    #[arg(long)]
    mask_a: PathBuf,
    #[arg(long)]
    image_b: PathBuf,
    #[arg(long)]
    mask_b: PathBuf,
    #[arg(long)]
    kernels: Option<PathBuf>,
    #[arg(long)]
    max_shift: Option<usize>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Score file, optionally named: `[NAME=]PATH`. Repeat for several methods.
    #[arg(long = "scores", required = true)]
    scores: Vec<String>,
    /// Scores are distances (converted to 1 - d).
    #[arg(long)]
    distance: bool,
    /// Delta bin edges.
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.4")]
    edges: Vec<f64>,
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Report CSV output.
    #[arg(long)]
    report_csv: Option<PathBuf>,
    /// Directory for per-method score histograms.
    #[arg(long)]
    histograms: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    histogram_bins: usize,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    /// Built examiner UI assets served under /ui.
    #[arg(long, default_value = "ui/dist")]
    ui_dir: PathBuf,
    #[arg(long)]
    external_url: Option<String>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0.4)]
    ratio: f64,
    #[arg(long, default_value_t = 256)]
    size: usize,
    #[arg(long, default_value_t = 100.0)]
    iris_radius: f64,
    /// Horizontal stretch of an elliptical pupil (1 keeps it circular).
    #[arg(long, default_value_t = 1.0)]
    pupil_aspect: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    mask_out: PathBuf,
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Parses `args` (program name first) and runs the command; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run `irisdeform --help` for usage");
            1
        }
        Err(Failure::Data(e)) => {
            eprintln!("error [{}]: {e}", e.name());
            2
        }
    }
}

fn dispatch(cli: Cli) -> CmdResult {
    let file = match &cli.config {
        Some(path) => Config::load(path).map_err(|e| Failure::Usage(e.to_string()))?,
        None => Config::default(),
    };
    let flags = Config {
        seed: cli.seed,
        jobs: cli.jobs,
        ..Default::default()
    };
    let cfg = file.merged(&flags);
    match cli.command {
        Command::Curate(a) => curate(&cfg, a),
        Command::Deform(a) => deform_cmd(&cfg, a),
        Command::MaskTarget(a) => mask_target(a),
        Command::Rectify(a) => rectify_cmd(&cfg, a),
        Command::Encode(a) => encode_cmd(a),
        Command::Match(a) => match_cmd(&cfg, a),
        Command::Evaluate(a) => evaluate(&cfg, a),
        Command::Serve(a) => serve_cmd(&cfg, a),
        Command::Synth(a) => synth(&cfg, a),
    }
}

fn usage(e: Error) -> Failure {
    Failure::Usage(e.to_string())
}

fn resolve_model(cfg: &Config, opts: &ModelOpts) -> Result<irisdeform::DeformationModel, Failure> {
    let cfg = cfg.merged(&Config {
        external_url: opts.external_url.clone(),
        ..Default::default()
    });
    cfg.model(opts.model.map(ModelArg::name))
        .map_err(|e| match e {
            Error::InvalidParameter(_) => usage(e),
            other => Failure::Data(other),
        })
}

fn load_bank(path: Option<&Path>) -> Result<FilterBank, Failure> {
    Ok(match path {
        Some(p) => FilterBank::load(p)?,
        None => default_gabor_bank(),
    })
}

fn load_pair(image: &Path, mask: &Path) -> Result<(GrayImage, IrisMask), Failure> {
    Ok((GrayImage::load_png(image)?, IrisMask::load_png(mask)?))
}

/// `o.png` -> `o_mask.png`.
fn mask_path_for(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let ext = out
        .extension()
        .map(|e| e.to_string_lossy().into_owned())
        .unwrap_or_else(|| "png".into());
    out.with_file_name(format!("{stem}_mask.{ext}"))
}

fn curate(cfg: &Config, a: CurateArgs) -> CmdResult {
    let cfg = cfg.merged(&Config {
        bins: a.bins,
        crop_size: a.crop_size,
        crop_padding: a.crop_padding,
        ..Default::default()
    });
    let mut ds = DatasetConfig::new(a.manifest, a.out);
    ds.binning = cfg.binning().map_err(usage)?;
    if let Some(s) = cfg.crop_size {
        ds.crop_size = s;
    }
    if let Some(p) = cfg.crop_padding {
        ds.crop_padding = p;
    }
    ds.validate().map_err(usage)?;
    let cur = run_curation(&ds, cfg.jobs.unwrap_or(0))?;
    let count = |f: fn(&ItemStatus) -> bool| cur.result.statuses.iter().filter(|s| f(s)).count();
    println!(
        "kept {} dropped {} failed {} pairs {}",
        count(|s| matches!(s, ItemStatus::Ok)),
        count(|s| matches!(s, ItemStatus::Dropped(_))),
        count(|s| matches!(s, ItemStatus::Failed(_))),
        cur.pairs.len()
    );
    eprintln!("curation took {} ms", cur.result.elapsed_ms());
    Ok(())
}

fn deform_cmd(cfg: &Config, a: DeformArgs) -> CmdResult {
    let model = resolve_model(cfg, &a.model)?;
    let (img, mask) = load_pair(&a.input, &a.mask)?;
    let target = IrisMask::load_png(&a.target)?;
    let (out, out_mask) = deform(&img, &mask, &target, &model)?;
    out.save_png(&a.out)?;
    out_mask.save_png(mask_path_for(&a.out))?;
    Ok(())
}

fn mask_target(a: MaskTargetArgs) -> CmdResult {
    let mask = IrisMask::load_png(&a.mask)?;
    let c = fit_circles(&mask)?;
    let eyelid = match &a.eyelid {
        Some(p) => IrisMask::load_png(p)?,
        None => IrisMask::full(mask.width(), mask.height())?,
    };
    let need = |v: Option<f64>, flag: &str| {
        v.ok_or_else(|| Failure::Usage(format!("--op needs --{flag}")))
    };
    let out = match a.op {
        MaskOp::Dilate => target_mask_dilate(&mask, &c, need(a.radius, "radius")?)?,
        MaskOp::Constrict => target_mask_constrict(&mask, &c, need(a.radius, "radius")?, &eyelid)?,
        MaskOp::Circular => circular_target_mask(&c, need(a.alpha, "alpha")?, &eyelid)?,
    };
    out.save_png(&a.out)?;
    Ok(())
}

fn rectify_cmd(cfg: &Config, a: RectifyArgs) -> CmdResult {
    let cfg = cfg.merged(&Config {
        alpha: a.alpha,
        ..Default::default()
    });
    let alpha = cfg
        .alpha
        .ok_or_else(|| Failure::Usage("rectify needs --alpha".into()))?;
    let model = resolve_model(&cfg, &a.model)?;
    let (img, mask) = load_pair(&a.input, &a.mask)?;
    let eyelid = a.eyelid.as_deref().map(IrisMask::load_png).transpose()?;
    let r = rectify(&img, &mask, alpha, &model, eyelid.as_ref())?;
    r.image.save_png(&a.out)?;
    r.mask.save_png(mask_path_for(&a.out))?;
    println!(
        "source ratio {:.4} -> target ratio {:.4}",
        r.source.ratio(),
        r.target.ratio()
    );
    Ok(())
}

fn encode_cmd(a: EncodeArgs) -> CmdResult {
    let bank = load_bank(a.kernels.as_deref())?;
    let (img, mask) = load_pair(&a.input, &a.mask)?;
    let c = fit_circles(&mask)?;
    let code = encode_image(&img, &mask, &c, &bank)?;
    std::fs::write(&a.out, code.to_bytes()).map_err(|e| Failure::Data(io_error(&a.out, e)))?;
    let (k, rows, cols) = code.shape();
    println!(
        "{k} kernels x {rows} x {cols}, {} of {} bits valid",
        code.valid_count(),
        code.bits().len()
    );
    Ok(())
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

/// Scores reported by `match` and `POST /match`.
#[derive(Debug, Clone, Copy, Serialize, serde::Deserialize, PartialEq)]
pub struct MatchReport {
    pub hamming: f64,
    pub filter_distance: f64,
    pub shift: i32,
}

/// Hamming and filter-response distances between two segmented iris images.
pub fn compare_irises(
    a: (&GrayImage, &IrisMask),
    b: (&GrayImage, &IrisMask),
    bank: &FilterBank,
    max_shift: usize,
) -> irisdeform::Result<MatchReport> {
    let ca: IrisCircles = fit_circles(a.1)?;
    let cb: IrisCircles = fit_circles(b.1)?;
    let code_a = encode_image(a.0, a.1, &ca, bank)?;
    let code_b = encode_image(b.0, b.1, &cb, bank)?;
    let score = hamming_distance(&code_a, &code_b, max_shift)?;
    let filter_distance = filter_response_distance(a.0, a.1, &ca, b.0, b.1, &cb, bank)?;
    Ok(MatchReport {
        hamming: score.distance,
        filter_distance,
        shift: score.shift,
    })
}

fn match_cmd(cfg: &Config, a: MatchArgs) -> CmdResult {
    let bank = load_bank(a.kernels.as_deref())?;
    let ia = load_pair(&a.image_a, &a.mask_a)?;
    let ib = load_pair(&a.image_b, &a.mask_b)?;
    let shift = a.max_shift.or(cfg.max_shift).unwrap_or(DEFAULT_MAX_SHIFT);
    let report = compare_irises((&ia.0, &ia.1), (&ib.0, &ib.1), &bank, shift)?;
    println!("{}", serde_json::to_string(&report).expect("plain struct"));
    Ok(())
}

fn evaluate(cfg: &Config, a: EvaluateArgs) -> CmdResult {
    let bootstrap = BootstrapConfig {
        fraction: a.fraction.or(cfg.bootstrap_fraction).unwrap_or(0.10),
        iterations: a.iterations.or(cfg.bootstrap_iterations).unwrap_or(100),
        seed: cfg.seed.unwrap_or(0),
    };
    bootstrap.validate().map_err(usage)?;
    let jobs = cfg.jobs.unwrap_or(0);
    let mut reports: Vec<(String, DeltaReport)> = Vec::new();
    let mut stdout = std::io::stdout().lock();
    for spec in &a.scores {
        let (name, path) = match spec.split_once('=') {
            Some((n, p)) => (n.to_string(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(spec);
                let n = p
                    .file_stem()
                    .map_or_else(|| spec.clone(), |s| s.to_string_lossy().into_owned());
                (n, p)
            }
        };
        let scores = read_scores(&path, a.distance)?;
        let full = auc(&scores)?;
        let boot = bootstrap_auc(&scores, &bootstrap, jobs)?;
        let d = decidability(&scores)?;
        let _ = writeln!(
            stdout,
            "{name}: AUC {full:.4}  bootstrap {:.4}±{:.4}  d' {d:.4}  ({} genuine, {} impostor)",
            boot.mean,
            boot.std,
            scores.genuine.len(),
            scores.impostor.len()
        );
        if let Some(dir) = &a.histograms {
            std::fs::create_dir_all(dir).map_err(|e| Failure::Data(io_error(dir, e)))?;
            let h = score_histogram(&scores, a.histogram_bins, 0.0, 1.0).map_err(usage)?;
            let p = dir.join(format!("{name}_histogram.csv"));
            let file = std::fs::File::create(&p).map_err(|e| Failure::Data(io_error(&p, e)))?;
            h.write_csv(file)?;
        }
        let report =
            delta_binned_report(&scores, &a.edges, &bootstrap, jobs).map_err(|e| match e {
                Error::InvalidParameter(_) => usage(e),
                other => Failure::Data(other),
            })?;
        reports.push((name, report));
    }
    let refs: Vec<(&str, &DeltaReport)> = reports.iter().map(|(n, r)| (n.as_str(), r)).collect();
    let _ = writeln!(stdout);
    let _ = write!(stdout, "{}", render_report_table(&refs));
    if let Some(p) = &a.report_csv {
        let file = std::fs::File::create(p).map_err(|e| Failure::Data(io_error(p, e)))?;
        write_report_csv(&refs, file)?;
    }
    Ok(())
}

fn serve_cmd(cfg: &Config, a: ServeArgs) -> CmdResult {
    let cfg = cfg.merged(&Config {
        external_url: a.external_url,
        ..Default::default()
    });
    let state = ServiceState::new(cfg, a.ui_dir);
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::Usage(format!("runtime: {e}")))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(a.bind)
            .await
            .map_err(|e| Failure::Usage(format!("cannot bind {}: {e}", a.bind)))?;
        eprintln!("listening on http://{}", a.bind);
        axum::serve(listener, server::router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| Failure::Usage(format!("server: {e}")))
    })
}

fn synth(cfg: &Config, a: SynthArgs) -> CmdResult {
    if !(a.ratio > 0.0 && a.ratio < 1.0) || a.pupil_aspect < 1.0 {
        return Err(Failure::Usage(
            "synth needs 0 < ratio < 1 and pupil-aspect >= 1".into(),
        ));
    }
    let mid = a.size as f64 / 2.0;
    let c = IrisCircles::concentric(mid, mid, a.ratio * a.iris_radius, a.iris_radius)?;
    let tex = IrisTexture::random(cfg.seed.unwrap_or(0));
    let (mut img, mut mask) = render_iris(&tex, &c, a.size, a.size, |u| u)?;
    if a.pupil_aspect > 1.0 {
        let b = c.pupil.r;
        let semi = (b * a.pupil_aspect).min(0.9 * a.iris_radius);
        carve_pupil_ellipse(&mut img, &mut mask, mid, mid, semi, b);
    }
    img.save_png(&a.out)?;
    mask.save_png(&a.mask_out)?;
    Ok(())
}
