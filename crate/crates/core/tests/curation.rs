use std::path::Path;

use irisdeform::geometry::ManifestRow;
use irisdeform::pipeline::{run_curation, DatasetConfig, ItemStatus};
use irisdeform::synth::{render_iris, IrisTexture};
use irisdeform::{IrisCircles, PairManifest};

/// Writes a 320x240 frame of one eye at pupil ratio `ratio` and returns its row.
fn write_eye(dir: &Path, name: &str, identity: &str, ratio: f64, seed: u64) -> ManifestRow {
    let iris_r = 80.0;
    let c = IrisCircles::concentric(150.0, 110.0, ratio * iris_r, iris_r).unwrap();
    let (img, mask) = render_iris(&IrisTexture::random(seed), &c, 320, 240, |u| u).unwrap();
    img.save_png(dir.join(format!("{name}.png"))).unwrap();
    mask.save_png(dir.join(format!("{name}_mask.png"))).unwrap();
    ManifestRow {
        image_path: format!("{name}.png"),
        mask_path: format!("{name}_mask.png"),
        identity_id: identity.into(),
        eye_label: "L".into(),
        pupil_radius: ratio * iris_r,
        iris_radius: iris_r,
    }
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = walk(dir)
        .into_iter()
        .map(|p| {
            (
                p.strip_prefix(dir).unwrap().display().to_string(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            files.extend(walk(&p));
        } else {
            files.push(p);
        }
    }
    files
}

#[test]
fn drops_out_of_range_rows_and_pairs_across_bins() {
    let dir = tempfile::tempdir().unwrap();
    let rows = vec![
        write_eye(dir.path(), "a", "s1", 0.15, 1),
        write_eye(dir.path(), "b", "s1", 0.25, 1),
        write_eye(dir.path(), "c", "s1", 0.65, 1),
    ];
    let manifest = dir.path().join("manifest.csv");
    PairManifest::new(rows)
        .unwrap()
        .write_csv(&manifest)
        .unwrap();
    let out = dir.path().join("out");
    let cfg = DatasetConfig::new(&manifest, &out);
    let cur = run_curation(&cfg, 1).unwrap();

    assert!(matches!(cur.result.statuses[0], ItemStatus::Dropped(_)));
    assert_eq!(cur.result.statuses[1..], [ItemStatus::Ok, ItemStatus::Ok]);
    assert_eq!(cur.manifest.rows.len(), 2);
    let bins: Vec<(usize, usize)> = cur
        .pairs
        .iter()
        .map(|p| (p.input_bin, p.target_bin))
        .collect();
    assert_eq!(bins, vec![(0, 4), (4, 0)]);

    let crop = irisdeform::GrayImage::load_png(out.join(&cur.manifest.rows[0].image_path)).unwrap();
    assert_eq!((crop.width(), crop.height()), (256, 256));
    let mask = irisdeform::IrisMask::load_png(out.join(&cur.manifest.rows[0].mask_path)).unwrap();
    let fit = irisdeform::geometry::fit_circles(&mask).unwrap();
    assert!((fit.iris.cx - 128.0).abs() < 1.0 && (fit.iris.cy - 128.0).abs() < 1.0);
}

#[test]
fn reruns_are_byte_identical_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<ManifestRow> = (0..6)
        .map(|k| {
            write_eye(
                dir.path(),
                &format!("e{k}"),
                &format!("s{}", k % 2),
                0.22 + 0.08 * k as f64,
                k,
            )
        })
        .collect();
    let manifest = dir.path().join("manifest.csv");
    PairManifest::new(rows)
        .unwrap()
        .write_csv(&manifest)
        .unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_curation(&DatasetConfig::new(&manifest, &a), 1).unwrap();
    run_curation(&DatasetConfig::new(&manifest, &a), 1).unwrap();
    run_curation(&DatasetConfig::new(&manifest, &b), 4).unwrap();
    assert_eq!(read_dir_bytes(&a), read_dir_bytes(&b));
}

#[test]
fn empty_manifest_and_unreadable_rows() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("empty.csv");
    PairManifest::default().write_csv(&manifest).unwrap();
    let cur = run_curation(&DatasetConfig::new(&manifest, dir.path().join("o1")), 2).unwrap();
    assert!(cur.manifest.rows.is_empty() && cur.pairs.is_empty() && cur.result.statuses.is_empty());

    let mut missing = write_eye(dir.path(), "x", "s1", 0.3, 3);
    missing.image_path = "does_not_exist.png".into();
    let good = write_eye(dir.path(), "y", "s1", 0.5, 3);
    let manifest = dir.path().join("m.csv");
    PairManifest::new(vec![missing, good])
        .unwrap()
        .write_csv(&manifest)
        .unwrap();
    let cur = run_curation(&DatasetConfig::new(&manifest, dir.path().join("o2")), 2).unwrap();
    assert!(matches!(&cur.result.statuses[0], ItemStatus::Failed(d) if d.starts_with("Io")));
    assert_eq!(cur.result.statuses[1], ItemStatus::Ok);
    assert_eq!(cur.result.failed(), 1);
}
