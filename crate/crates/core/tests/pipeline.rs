use std::collections::BTreeMap;
use std::path::Path;

use xiris_core::evaluation::{load_manifest, run_protocol, ProtocolOutput};
use xiris_core::imaging::load_image;
use xiris_core::segmentation::segment_iris_with;
use xiris_core::synthdata::{generate_dataset, read_ground_truth, DatasetSpec};
use xiris_core::{Channel, DatasetManifest, EncoderId, EvalConfig, EyeColor, Pipeline, Spectrum};

fn small_spec(seed: u64) -> DatasetSpec {
    DatasetSpec {
        subjects: 4,
        n_nir: 3,
        n_vis: 2,
        seed,
        ..DatasetSpec::default()
    }
}

fn gabor_red() -> EvalConfig {
    EvalConfig {
        encoders: vec![EncoderId::Gabor],
        channels: vec![Channel::Red],
        workers: 1,
        ..EvalConfig::default()
    }
}

/// Probability that a random genuine score is below a random impostor
/// score, ties counting one half.
fn auc(genuine: &[f64], impostor: &[f64]) -> f64 {
    let mut wins = 0.0;
    for g in genuine {
        for i in impostor {
            wins += if g < i {
                1.0
            } else if g == i {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / (genuine.len() * impostor.len()) as f64
}

fn count_by(manifest: &DatasetManifest, subset: EyeColor, spectrum: Spectrum) -> usize {
    manifest
        .entries()
        .iter()
        .filter(|e| e.meta.eye_color == subset && e.meta.spectrum == spectrum)
        .count()
}

#[test]
fn default_dataset_shape() {
    let dir = tempfile::tempdir().unwrap();
    let m = generate_dataset(&DatasetSpec::default(), dir.path()).unwrap();
    let c = m.counts();
    assert_eq!(
        (c.subjects, c.irises, c.nir_images, c.vis_images),
        (20, 40, 240, 120)
    );
    // 20 subjects split 32:18:22 by largest remainder: 8.89, 5.00, 6.11
    let per_color: Vec<usize> = EyeColor::ALL
        .iter()
        .map(|col| c.irises_per_color[col])
        .collect();
    assert_eq!(per_color, vec![18, 10, 12]);
    let reloaded = load_manifest(&dir.path().join("manifest.csv")).unwrap();
    assert_eq!(reloaded.entries(), m.entries());
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for sub in ["", "nir", "vis"] {
        for e in std::fs::read_dir(dir.join(sub)).unwrap() {
            let p = e.unwrap().path();
            if p.is_file() {
                out.insert(
                    p.strip_prefix(dir).unwrap().display().to_string(),
                    std::fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

#[test]
fn generation_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate_dataset(&small_spec(5), a.path()).unwrap();
    generate_dataset(&small_spec(5), b.path()).unwrap();
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    assert_eq!(ta.len(), 8 * 5 + 2);
    assert!(ta == tb);
    let c = tempfile::tempdir().unwrap();
    generate_dataset(&small_spec(6), c.path()).unwrap();
    assert!(tree(c.path()) != ta);
}

#[test]
fn sidecar_geometry_is_recovered() {
    let dir = tempfile::tempdir().unwrap();
    let m = generate_dataset(
        &DatasetSpec {
            subjects: 2,
            n_nir: 2,
            n_vis: 1,
            seed: 12,
            ..DatasetSpec::default()
        },
        dir.path(),
    )
    .unwrap();
    let truth = read_ground_truth(&dir.path().join("groundtruth.jsonl")).unwrap();
    assert_eq!(truth.len(), m.entries().len());
    let p = Pipeline::default();
    for (entry, (path, gt)) in m.entries().iter().zip(&truth) {
        assert_eq!(&entry.meta.source_path, path);
        let img = load_image(&m.resolve(entry), entry.meta.clone()).unwrap();
        let gray = xiris_core::pipeline::to_single_plane(&img, Channel::Red).unwrap();
        let s = segment_iris_with(&gray, &p.segmentation).unwrap();
        for (found, want) in [(s.pupil, gt.pupil), (s.limbus, gt.limbus)] {
            let err = (found.cx - want.cx)
                .abs()
                .max((found.cy - want.cy).abs())
                .max((found.r - want.r).abs());
            assert!(err <= 2.0, "{path}: {found:?} vs {want:?}");
        }
    }
}

fn small_run(dir: &Path, config: &EvalConfig) -> (DatasetManifest, ProtocolOutput) {
    let m = generate_dataset(&small_spec(8), &dir.join("data")).unwrap();
    let out = run_protocol(&m, config, &Pipeline::default(), None).unwrap();
    (m, out)
}

#[test]
fn cross_spectral_scores_separate_identities() {
    let dir = tempfile::tempdir().unwrap();
    let (m, out) = small_run(dir.path(), &gabor_red());
    assert!(out.ledger.is_empty(), "{:?}", out.ledger);
    let mut genuine = Vec::new();
    let mut impostor = Vec::new();
    for set in &out.scores {
        // every NIR x VIS pair of the subset is scored exactly once
        let pairs = count_by(&m, set.cell.subset, Spectrum::Nir)
            * count_by(&m, set.cell.subset, Spectrum::Vis);
        assert_eq!(
            set.genuine.len() + set.impostor.len() + set.excluded_pairs,
            pairs,
            "{}",
            set.cell
        );
        genuine.extend_from_slice(&set.genuine);
        impostor.extend_from_slice(&set.impostor);
    }
    assert!(!genuine.is_empty() && !impostor.is_empty());
    let a = auc(&genuine, &impostor);
    assert!(a > 0.9, "AUC {a}");
}

#[test]
fn warm_disk_cache_gives_identical_scores() {
    let dir = tempfile::tempdir().unwrap();
    let config = EvalConfig {
        cache_dir: Some(dir.path().join("cache")),
        encoders: EncoderId::ALL.to_vec(),
        ..gabor_red()
    };
    let (m, cold) = small_run(dir.path(), &config);
    let files = std::fs::read_dir(dir.path().join("cache")).unwrap().count();
    assert!(files > 0);
    let warm = run_protocol(&m, &config, &Pipeline::default(), None).unwrap();
    assert_eq!(cold, warm);
    assert_eq!(
        std::fs::read_dir(dir.path().join("cache")).unwrap().count(),
        files
    );
}
