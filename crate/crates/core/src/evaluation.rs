//! Verification statistics: genuine/impostor pairing, rank AUC, bootstrap
//! AUC, decidability, and ratio-difference (delta) binned reports.
//!
//! Scores are similarities throughout; distance-valued inputs are converted
//! with `1 - d` when read. Bootstrap iteration `i` draws from a ChaCha20
//! generator seeded with `seed` on stream `i`, so results do not depend on
//! how iterations are scheduled across threads.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PairManifest;

const EDGE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Genuine,
    Impostor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub score: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreSet {
    pub genuine: Vec<Score>,
    pub impostor: Vec<Score>,
}

impl ScoreSet {
    pub fn new(genuine: Vec<Score>, impostor: Vec<Score>) -> Result<Self> {
        if genuine
            .iter()
            .chain(&impostor)
            .any(|s| !s.score.is_finite() || !s.delta.is_finite())
        {
            return Err(Error::InvalidParameter(
                "scores and deltas must be finite".into(),
            ));
        }
        Ok(Self { genuine, impostor })
    }

    /// Scores with a common delta of zero.
    pub fn from_scores(genuine: &[f64], impostor: &[f64]) -> Result<Self> {
        let wrap = |v: &[f64]| v.iter().map(|&score| Score { score, delta: 0.0 }).collect();
        Self::new(wrap(genuine), wrap(impostor))
    }

    /// Builds a set from labelled records; `distance` marks records whose
    /// score is a distance (converted to `1 - score`).
    pub fn from_records(records: &[ScoreRecord], distance: bool) -> Result<Self> {
        let (mut genuine, mut impostor) = (Vec::new(), Vec::new());
        for r in records {
            let score = if distance { 1.0 - r.score } else { r.score };
            let s = Score {
                score,
                delta: r.delta,
            };
            match r.label {
                Label::Genuine => genuine.push(s),
                Label::Impostor => impostor.push(s),
            }
        }
        Self::new(genuine, impostor)
    }

    pub fn genuine_scores(&self) -> Vec<f64> {
        self.genuine.iter().map(|s| s.score).collect()
    }

    pub fn impostor_scores(&self) -> Vec<f64> {
        self.impostor.iter().map(|s| s.score).collect()
    }

    pub fn swapped(&self) -> Self {
        Self {
            genuine: self.impostor.clone(),
            impostor: self.genuine.clone(),
        }
    }
}

/// An unordered comparison between manifest rows `a < b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub pair_id: String,
    pub a: usize,
    pub b: usize,
    pub label: Label,
    pub delta: f64,
}

/// All unordered row pairs in row-major order; genuine when both rows show
/// the same eye (identity and eye label). `delta` is the absolute
/// difference of the two pupil-to-iris ratios.
pub fn label_pairs(m: &PairManifest) -> Vec<LabeledPair> {
    let mut out = Vec::new();
    for (i, ri) in m.rows.iter().enumerate() {
        for (j, rj) in m.rows.iter().enumerate().skip(i + 1) {
            let label = if ri.eye_key() == rj.eye_key() {
                Label::Genuine
            } else {
                Label::Impostor
            };
            out.push(LabeledPair {
                pair_id: format!("{i}-{j}"),
                a: i,
                b: j,
                label,
                delta: (ri.ratio() - rj.ratio()).abs(),
            });
        }
    }
    out
}

/// Probability that a random genuine score exceeds a random impostor score,
/// ties counting one half (Mann-Whitney statistic with average ranks).
pub fn auc(s: &ScoreSet) -> Result<f64> {
    auc_of(&s.genuine_scores(), &s.impostor_scores())
}

fn auc_of(genuine: &[f64], impostor: &[f64]) -> Result<f64> {
    if genuine.is_empty() {
        return Err(Error::EmptyClass("genuine"));
    }
    if impostor.is_empty() {
        return Err(Error::EmptyClass("impostor"));
    }
    let mut all: Vec<(f64, bool)> = genuine
        .iter()
        .map(|&v| (v, true))
        .chain(impostor.iter().map(|&v| (v, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their average
        let avg = (i + j + 2) as f64 / 2.0;
        let hits = all[i..=j].iter().filter(|e| e.1).count();
        rank_sum += avg * hits as f64;
        i = j + 1;
    }
    let (ng, ni) = (genuine.len() as f64, impostor.len() as f64);
    Ok((rank_sum - ng * (ng + 1.0) / 2.0) / (ng * ni))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub fraction: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            fraction: 0.10,
            iterations: 100,
            seed: 0,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "bootstrap fraction {} outside (0, 1]",
                self.fraction
            )));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidParameter(
                "bootstrap needs at least one iteration".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub mean: f64,
    /// Population standard deviation over iterations.
    pub std: f64,
}

/// Mean and standard deviation of the AUC over resampled score sets.
///
/// Each iteration draws `ceil(fraction * n)` genuine and
/// `ceil(fraction * m)` impostor scores with replacement, independently per
/// class. With `fraction == 1` every iteration uses the full lists, so the
/// result is the full-sample AUC with zero spread. `jobs` bounds the worker
/// threads (0 uses the global pool); the result is identical for any value.
pub fn bootstrap_auc(s: &ScoreSet, cfg: &BootstrapConfig, jobs: usize) -> Result<BootstrapResult> {
    cfg.validate()?;
    let genuine = s.genuine_scores();
    let impostor = s.impostor_scores();
    // surfaces EmptyClass before any sampling
    let full = auc_of(&genuine, &impostor)?;
    if cfg.fraction == 1.0 {
        return Ok(BootstrapResult {
            mean: full,
            std: 0.0,
        });
    }
    let kg = (cfg.fraction * genuine.len() as f64).ceil() as usize;
    let ki = (cfg.fraction * impostor.len() as f64).ceil() as usize;
    let run = |iter: usize| -> Result<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
        rng.set_stream(iter as u64);
        let g: Vec<f64> = (0..kg)
            .map(|_| genuine[rng.gen_range(0..genuine.len())])
            .collect();
        let i: Vec<f64> = (0..ki)
            .map(|_| impostor[rng.gen_range(0..impostor.len())])
            .collect();
        auc_of(&g, &i)
    };
    let values: Vec<f64> = if jobs == 1 {
        (0..cfg.iterations).map(run).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
        pool.install(|| {
            (0..cfg.iterations)
                .into_par_iter()
                .map(run)
                .collect::<Result<_>>()
        })?
    };
    let (mean, std) = mean_std(&values);
    Ok(BootstrapResult { mean, std })
}

/// Mean and population standard deviation, accumulated relative to the first
/// value so a constant sequence gives its value and exactly zero spread.
fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let base = values[0];
    let mean = base + values.iter().map(|v| v - base).sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Sample mean and unbiased sample variance.
fn sample_stats(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// `d' = |mu_g - mu_i| / sqrt((var_g + var_i) / 2)` from sample statistics.
/// When both variances vanish the result is 0 for equal means and
/// `f64::INFINITY` otherwise. Fewer than two scores in a class is
/// `EmptyClass`.
pub fn decidability(s: &ScoreSet) -> Result<f64> {
    if s.genuine.len() < 2 {
        return Err(Error::EmptyClass("genuine"));
    }
    if s.impostor.len() < 2 {
        return Err(Error::EmptyClass("impostor"));
    }
    let (mg, vg) = sample_stats(&s.genuine_scores());
    let (mi, vi) = sample_stats(&s.impostor_scores());
    let spread = ((vg + vi) / 2.0).sqrt();
    let gap = (mg - mi).abs();
    if spread == 0.0 {
        return Ok(if gap == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(gap / spread)
}

/// One delta bin of a report; `result` is `None` when a class is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub lo: f64,
    pub hi: f64,
    pub n_genuine: usize,
    pub n_impostor: usize,
    pub result: Option<BootstrapResult>,
}

impl DeltaRow {
    /// `[lo, hi]` for the first bin, `(lo, hi]` after it.
    pub fn label(&self, first: bool) -> String {
        let open = if first { '[' } else { '(' };
        format!("{open}{}, {}]", trim_float(self.lo), trim_float(self.hi))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub rows: Vec<DeltaRow>,
}

/// Index of the delta bin holding `delta`: `[e0, e1]`, `(e1, e2]`, ...
pub fn delta_bin(delta: f64, edges: &[f64]) -> Option<usize> {
    let last = edges.len().checked_sub(1)?;
    if last == 0 || delta < edges[0] - EDGE_EPS || delta > edges[last] + EDGE_EPS {
        return None;
    }
    (0..last).find(|&k| delta <= edges[k + 1] + EDGE_EPS)
}

/// Bootstrap AUC per delta bin. Pairs outside `[e0, e_last]` are ignored.
pub fn delta_binned_report(
    s: &ScoreSet,
    edges: &[f64],
    cfg: &BootstrapConfig,
    jobs: usize,
) -> Result<DeltaReport> {
    if edges.len() < 2
        || edges.windows(2).any(|w| w[0] >= w[1])
        || edges.iter().any(|e| !e.is_finite())
    {
        return Err(Error::InvalidParameter(format!(
            "delta edges must be at least two strictly increasing values, got {edges:?}"
        )));
    }
    cfg.validate()?;
    let bins = edges.len() - 1;
    let mut split = vec![ScoreSet::default(); bins];
    for g in &s.genuine {
        if let Some(k) = delta_bin(g.delta, edges) {
            split[k].genuine.push(*g);
        }
    }
    for i in &s.impostor {
        if let Some(k) = delta_bin(i.delta, edges) {
            split[k].impostor.push(*i);
        }
    }
    let rows = split
        .iter()
        .enumerate()
        .map(|(k, set)| {
            let result = if set.genuine.is_empty() || set.impostor.is_empty() {
                None
            } else {
                Some(bootstrap_auc(set, cfg, jobs)?)
            };
            Ok(DeltaRow {
                lo: edges[k],
                hi: edges[k + 1],
                n_genuine: set.genuine.len(),
                n_impostor: set.impostor.len(),
                result,
            })
        })
        .collect::<Result<_>>()?;
    Ok(DeltaReport { rows })
}

fn trim_float(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0');
    s.strip_suffix('.')
        .map_or_else(|| s.to_string(), |t| format!("{t}.0"))
}

/// `0.996±0.002`; with `epsilon` set, the spread is written as `ε`.
pub fn format_cell(r: &BootstrapResult, epsilon: bool) -> String {
    if epsilon {
        format!("{:.3}±ε", r.mean)
    } else {
        format!("{:.3}±{:.3}", r.mean, r.std)
    }
}

/// Aligned text table: one row per delta bin, one column per method. When
/// every rounded standard deviation in the table falls within a band no
/// wider than 0.001, cells show `±ε` and a footer gives the band. Bins
/// without both classes show `n/a`.
pub fn render_report_table(methods: &[(&str, &DeltaReport)]) -> String {
    let stds: Vec<f64> = methods
        .iter()
        .flat_map(|(_, r)| r.rows.iter().filter_map(|row| row.result))
        .map(|r| (r.std * 1000.0).round() / 1000.0)
        .collect();
    let (lo, hi) = stds
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &s| {
            (a.min(s), b.max(s))
        });
    let epsilon = !stds.is_empty() && hi > 0.0 && hi - lo <= 0.001 + 1e-12;

    let bins = methods.iter().map(|(_, r)| r.rows.len()).max().unwrap_or(0);
    let mut table: Vec<Vec<String>> = Vec::with_capacity(bins + 1);
    let mut header = vec!["Δ".to_string()];
    header.extend(methods.iter().map(|(name, _)| name.to_string()));
    table.push(header);
    for k in 0..bins {
        let label = methods
            .iter()
            .find_map(|(_, r)| r.rows.get(k))
            .map(|row| row.label(k == 0))
            .unwrap_or_default();
        let mut line = vec![label];
        for (_, r) in methods {
            line.push(match r.rows.get(k).and_then(|row| row.result) {
                Some(res) => format_cell(&res, epsilon),
                None => "n/a".into(),
            });
        }
        table.push(line);
    }
    let cols = table.first().map_or(0, Vec::len);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            table
                .iter()
                .map(|row| row[c].chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for row in &table {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, &w)| format!("{cell}{}", " ".repeat(w - cell.chars().count())))
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    if epsilon {
        let _ = writeln!(out, "ε ∈ [{lo:.3}, {hi:.3}]");
    }
    out
}

/// CSV with header `method,bin_lo,bin_hi,n_genuine,n_impostor,mean,std`;
/// absent bins leave `mean` and `std` empty.
pub fn write_report_csv(
    methods: &[(&str, &DeltaReport)],
    writer: impl std::io::Write,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "method",
        "bin_lo",
        "bin_hi",
        "n_genuine",
        "n_impostor",
        "mean",
        "std",
    ])?;
    for (name, report) in methods {
        for row in &report.rows {
            let (mean, std) = row.result.map_or((String::new(), String::new()), |r| {
                (r.mean.to_string(), r.std.to_string())
            });
            w.write_record([
                name.to_string(),
                row.lo.to_string(),
                row.hi.to_string(),
                row.n_genuine.to_string(),
                row.n_impostor.to_string(),
                mean,
                std,
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// One line of a score file: `pair_id,label,score,delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub pair_id: String,
    pub label: Label,
    pub score: f64,
    pub delta: f64,
}

pub fn read_score_records(reader: impl std::io::Read) -> Result<Vec<ScoreRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    Ok(rdr
        .deserialize()
        .collect::<std::result::Result<Vec<ScoreRecord>, _>>()?)
}

pub fn write_score_records(records: &[ScoreRecord], writer: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if records.is_empty() {
        w.write_record(["pair_id", "label", "score", "delta"])?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Reads a score file; `distance` converts each score to `1 - score`.
pub fn read_scores(path: impl AsRef<Path>, distance: bool) -> Result<ScoreSet> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ScoreSet::from_records(&read_score_records(file)?, distance)
}

/// Genuine and impostor counts over equal-width score bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreHistogram {
    pub edges: Vec<f64>,
    pub genuine: Vec<usize>,
    pub impostor: Vec<usize>,
}

/// Histogram over `[lo, hi]` with `bins` equal bins; the last bin is closed
/// and scores outside the range are clamped into the end bins.
pub fn score_histogram(s: &ScoreSet, bins: usize, lo: f64, hi: f64) -> Result<ScoreHistogram> {
    if bins == 0 || lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) {
        return Err(Error::InvalidParameter(format!(
            "histogram needs bins > 0 and lo < hi, got {bins} over [{lo}, {hi}]"
        )));
    }
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|k| lo + k as f64 * width).collect();
    let index = |v: f64| (((v - lo) / width).floor().max(0.0) as usize).min(bins - 1);
    let mut genuine = vec![0; bins];
    let mut impostor = vec![0; bins];
    for g in &s.genuine {
        genuine[index(g.score)] += 1;
    }
    for i in &s.impostor {
        impostor[index(i.score)] += 1;
    }
    Ok(ScoreHistogram {
        edges,
        genuine,
        impostor,
    })
}

impl ScoreHistogram {
    /// CSV with header `bin_lo,bin_hi,genuine,impostor`.
    pub fn write_csv(&self, writer: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["bin_lo", "bin_hi", "genuine", "impostor"])?;
        for k in 0..self.genuine.len() {
            w.write_record([
                self.edges[k].to_string(),
                self.edges[k + 1].to_string(),
                self.genuine[k].to_string(),
                self.impostor[k].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}
