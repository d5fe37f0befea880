//! Measurements used to pick the synthetic-data and encoder defaults.
//!
//! ```text
//! cargo run --release -p xiris-cli --example calibrate -- <what> [n]
//! ```
//!
//! `what` is one of `impostor`, `segment`, `rotation`, `dilation`, `eval`,
//! `fast`. `eval` renders the default dataset and prints the per-cell EERs;
//! `fast` does the same with ground-truth circles and no files.
//!
//! Environment: `XIRIS_MODEL` spectral model file, `XIRIS_TEX` texture
//! model as `sigma_angular,sigma_radial,streaks,streak_weight`,
//! `XIRIS_SEED` dataset seed for `fast`, `XIRIS_DATA` output dir for `eval`.

use std::time::Instant;

use xiris_core::evaluation::{
    build_comparisons, run_protocol, CellKey, CellReport, Label, ManifestEntry, ScoreSet,
};
use xiris_core::matching::{fractional_hd, match_with_shifts};
use xiris_core::normalization::rubber_sheet;
use xiris_core::segmentation::{
    build_noise_mask, segment_iris_with, specular_mask, SegmentationResult,
};
use xiris_core::synthdata::{
    generate_dataset, generate_identity, generate_identity_with, jitter_geometry, mix_seed,
    plan_irises, render_eye, DatasetSpec, GroundTruth, IrisTexture, SpectralContrastModel,
    TextureModel, NIR_FRAME, VIS_FRAME,
};
use xiris_core::{
    Band, Channel, Circle, DatasetManifest, EncoderId, EvalConfig, EyeColor, EyeSide, IrisCode,
    NormalizedIris, Pipeline, SampleMeta, Spectrum,
};

fn meta(spectrum: Spectrum) -> SampleMeta {
    SampleMeta {
        subject_id: "cal".into(),
        eye_side: EyeSide::Left,
        eye_color: EyeColor::Blue,
        spectrum,
        source_path: String::new(),
    }
}

fn unit(seed: u64) -> f64 {
    (mix_seed(&[seed]) >> 11) as f64 / (1u64 << 53) as f64
}

fn model() -> SpectralContrastModel {
    match std::env::var("XIRIS_MODEL") {
        Ok(p) => SpectralContrastModel::load(p.as_ref()).expect("model file"),
        Err(_) => SpectralContrastModel::default(),
    }
}

fn texture_model() -> TextureModel {
    let mut t = TextureModel::default();
    if let Ok(v) = std::env::var("XIRIS_TEX") {
        let f: Vec<f64> = v.split(',').map(|x| x.parse().unwrap()).collect();
        t.sigma_angular = f[0];
        t.sigma_radial = f[1];
        t.streaks = f[2] as usize;
        t.streak_weight = f[3];
    }
    t
}

fn straight(t: &IrisTexture) -> NormalizedIris {
    let n = t.values().len();
    NormalizedIris::new(
        t.radial(),
        t.angular(),
        t.values().to_vec(),
        vec![true; n],
        meta(Spectrum::Nir),
    )
    .unwrap()
}

fn stats(v: &[f64]) -> (f64, f64) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
    (m, sd)
}

fn impostor(n: usize) {
    let p = Pipeline::default();
    for id in EncoderId::ALL {
        let codes: Vec<_> = (0..n as u64)
            .map(|s| {
                p.encode(
                    &straight(&generate_identity_with(
                        mix_seed(&[99, s]),
                        &texture_model(),
                    )),
                    id,
                )
                .unwrap()
            })
            .collect();
        let (mut plain, mut shifted) = (Vec::new(), Vec::new());
        for i in 0..n {
            for j in i + 1..n {
                plain.push(fractional_hd(&codes[i], &codes[j]).unwrap().score);
                shifted.push(match_with_shifts(&codes[i], &codes[j], 8).unwrap().score);
            }
        }
        let ones = codes
            .iter()
            .map(|c| {
                (0..c.rows())
                    .flat_map(|r| (0..c.cols()).map(move |k| (r, k)))
                    .filter(|&(r, k)| c.bit(r, k))
                    .count() as f64
                    / c.len() as f64
            })
            .sum::<f64>()
            / n as f64;
        println!(
            "{id}: bits {} plain {:?} shift8 {:?} p(1) {ones:.3}",
            codes[0].len(),
            stats(&plain),
            stats(&shifted)
        );
    }
}

fn gt(seed: u64, pupil_scale: f64, rotation_deg: f64, vis: bool) -> GroundTruth {
    let frame = if vis { VIS_FRAME } else { NIR_FRAME };
    let lr = 100.0 + 20.0 * unit(seed ^ 1);
    let cx = frame.0 as f64 / 2.0 + 20.0 * unit(seed ^ 2) - 10.0;
    let cy = frame.1 as f64 / 2.0 + 20.0 * unit(seed ^ 3) - 10.0;
    let pr = lr * (0.32 + 0.08 * unit(seed ^ 4)) * pupil_scale;
    GroundTruth {
        pupil: Circle::new(cx, cy, pr),
        limbus: Circle::new(
            cx + 6.0 * unit(seed ^ 5) - 3.0,
            cy + 6.0 * unit(seed ^ 6) - 3.0,
            lr,
        ),
        identity_seed: seed,
        rotation: rotation_deg.to_radians(),
        highlight: vis.then(|| Circle::new(cx + 0.5 * pr, cy - 0.3 * pr, 5.0)),
    }
}

fn segment(n: usize) {
    let p = Pipeline::default();
    let m = model();
    let t0 = Instant::now();
    let mut ok = 0;
    let mut worst = Vec::new();
    for i in 0..n as u64 {
        let vis = i % 2 == 1;
        let color = EyeColor::ALL[(i / 2 % 3) as usize];
        let band = if vis {
            [Band::Red, Band::Green, Band::Blue][(i / 6 % 3) as usize]
        } else {
            Band::Nir
        };
        let g = gt(mix_seed(&[5, i]), 1.0 + 0.5 * unit(i ^ 77) - 0.25, 0.0, vis);
        let tex = generate_identity(g.identity_seed);
        let frame = if vis { VIS_FRAME } else { NIR_FRAME };
        let mut mt = meta(if vis { Spectrum::Vis } else { Spectrum::Nir });
        mt.eye_color = color;
        let (img, _) = render_eye(&tex, band, color, &g, &m, frame, i, mt).unwrap();
        match segment_iris_with(&img, &p.segmentation) {
            Ok(s) => {
                let e = |a: &Circle, b: &Circle| {
                    (a.cx - b.cx)
                        .abs()
                        .max((a.cy - b.cy).abs())
                        .max((a.r - b.r).abs())
                };
                let err = e(&s.pupil, &g.pupil).max(e(&s.limbus, &g.limbus));
                if err <= 2.0 {
                    ok += 1;
                } else {
                    worst.push(format!(
                        "{i} {band:?} {color}: pupil {:?} vs {:?}; limbus {:?} vs {:?}",
                        s.pupil, g.pupil, s.limbus, g.limbus
                    ));
                }
            }
            Err(e) => worst.push(format!("{i} {band:?} {color}: {e}")),
        }
    }
    for w in worst.iter().take(20) {
        println!("{w}");
    }
    println!(
        "{ok}/{n} within 2 px, {:.2}s per image",
        t0.elapsed().as_secs_f64() / n as f64
    );
}

fn pair_score(
    a: &GroundTruth,
    b: &GroundTruth,
    vis_b: Option<(Band, EyeColor)>,
    id: EncoderId,
) -> Option<f64> {
    let p = Pipeline::default();
    let m = model();
    let tex = generate_identity(a.identity_seed);
    let (ia, _) = render_eye(
        &tex,
        Band::Nir,
        EyeColor::Blue,
        a,
        &m,
        NIR_FRAME,
        1,
        meta(Spectrum::Nir),
    )
    .ok()?;
    let (band, color, frame, sp) = match vis_b {
        Some((band, color)) => (band, color, VIS_FRAME, Spectrum::Vis),
        None => (Band::Nir, EyeColor::Blue, NIR_FRAME, Spectrum::Nir),
    };
    let (ib, _) = render_eye(&tex, band, color, b, &m, frame, 2, meta(sp)).ok()?;
    let ca = p.template(&ia, id).ok()?;
    let cb = p.template(&ib, id).ok()?;
    Some(match_with_shifts(&ca, &cb, 8).ok()?.score)
}

fn rotation(n: usize) {
    for id in EncoderId::ALL {
        let mut worst: f64 = 0.0;
        let mut deltas = Vec::new();
        for i in 0..n as u64 {
            let seed = mix_seed(&[21, i]);
            let deg = 8.0 * unit(seed ^ 9) - 4.0;
            let a = gt(seed, 1.0, 0.0, false);
            let base = pair_score(&a, &a.clone(), None, id);
            let rot = pair_score(
                &a,
                &GroundTruth {
                    rotation: deg.to_radians(),
                    ..a.clone()
                },
                None,
                id,
            );
            if let (Some(b), Some(r)) = (base, rot) {
                deltas.push(r - b);
                worst = worst.max(r - b);
            }
        }
        let over = deltas.iter().filter(|&&d| d > 0.05).count();
        println!(
            "{id}: mean delta {:?} worst {worst:.4} over 0.05: {over}/{}",
            stats(&deltas),
            deltas.len()
        );
    }
}

fn dilation(n: usize) {
    let mut scores = Vec::new();
    for i in 0..n as u64 {
        let seed = mix_seed(&[31, i]);
        let a = gt(seed, 1.0, 0.0, false);
        let s = if i % 2 == 0 { 1.25 } else { 0.75 };
        let b = GroundTruth {
            pupil: Circle {
                r: a.pupil.r * s,
                ..a.pupil
            },
            ..a.clone()
        };
        if let Some(v) = pair_score(&a, &b, None, EncoderId::Gabor) {
            scores.push(v);
        }
    }
    let below = scores.iter().filter(|&&s| s < 0.25).count();
    println!("gabor dilation: {:?}, < 0.25: {below}/{n}", stats(&scores));
}

fn eval() {
    let dir = std::env::var("XIRIS_DATA")
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|_| std::env::temp_dir().join("xiris-cal"));
    let spec = DatasetSpec {
        model: model(),
        ..DatasetSpec::default()
    };
    let t0 = Instant::now();
    let manifest = generate_dataset(&spec, &dir).unwrap();
    println!(
        "rendered {} images in {:.1}s",
        manifest.entries().len(),
        t0.elapsed().as_secs_f64()
    );
    let t0 = Instant::now();
    let out = run_protocol(
        &manifest,
        &EvalConfig::default(),
        &Pipeline::default(),
        None,
    )
    .unwrap();
    println!(
        "protocol {:.1}s, {} ledger records",
        t0.elapsed().as_secs_f64(),
        out.ledger.len()
    );
    for r in out.ledger.records().take(10) {
        println!("  {r:?}");
    }
    for s in out.scores {
        let g = stats(&s.genuine);
        let i = stats(&s.impostor);
        let c = CellReport::new(s);
        println!(
            "{:32} eer {:.4} gen {:.3}±{:.3} imp {:.3}±{:.3} fail {}",
            c.scores.cell.to_string(),
            c.eer().unwrap_or(f64::NAN),
            g.0,
            g.1,
            i.0,
            i.1,
            c.scores.failed_samples
        );
    }
}

/// Same protocol as `eval` but with ground-truth circles instead of the
/// segmenter and no files; fast enough to sweep model parameters.
fn fast_eval() {
    let seed = std::env::var("XIRIS_SEED")
        .map(|v| v.parse().unwrap())
        .unwrap_or(7);
    let spec = DatasetSpec {
        model: model(),
        seed,
        ..DatasetSpec::default()
    };
    let p = Pipeline::default();
    let plans = plan_irises(&spec);
    let mut entries = Vec::new();
    let mut codes: Vec<Vec<Vec<IrisCode>>> = Vec::new(); // entry -> channel -> encoder
    for plan in &plans {
        let tex = generate_identity_with(plan.identity_seed, &spec.texture);
        for (spectrum, n) in [(Spectrum::Nir, spec.n_nir), (Spectrum::Vis, spec.n_vis)] {
            for k in 0..n {
                let g = jitter_geometry(&spec, plan, spectrum, k);
                let mt = SampleMeta {
                    subject_id: plan.subject_id.clone(),
                    eye_side: plan.eye_side,
                    eye_color: plan.eye_color,
                    spectrum,
                    source_path: format!("{}{}{k}", plan.subject_id, plan.eye_side),
                };
                let bands: Vec<Band> = if spectrum == Spectrum::Nir {
                    vec![Band::Nir]
                } else {
                    vec![Band::Red, Band::Green, Band::Blue]
                };
                let frame = if spectrum == Spectrum::Nir {
                    NIR_FRAME
                } else {
                    VIS_FRAME
                };
                let seed = mix_seed(&[plan.identity_seed, 0x401, spectrum as u64, k as u64]);
                let per_band: Vec<Vec<_>> = bands
                    .iter()
                    .map(|&b| {
                        let (img, _) = render_eye(
                            &tex,
                            b,
                            plan.eye_color,
                            &g,
                            &spec.model,
                            frame,
                            seed ^ b as u64,
                            mt.clone(),
                        )
                        .unwrap();
                        let seg = SegmentationResult {
                            pupil: g.pupil,
                            limbus: g.limbus,
                            noise_mask: build_noise_mask(
                                &g.pupil,
                                &g.limbus,
                                &specular_mask(&img).unwrap(),
                                0.9,
                            ),
                        };
                        let n = rubber_sheet(&img, &seg, 64, 512).unwrap();
                        EncoderId::ALL
                            .iter()
                            .map(|&id| p.encode(&n, id).unwrap())
                            .collect()
                    })
                    .collect();
                codes.push(per_band);
                entries.push(ManifestEntry {
                    meta: mt.clone(),
                    path: mt.source_path.into(),
                });
            }
        }
    }
    let manifest = DatasetManifest::new(entries, Default::default()).unwrap();
    for (ei, id) in EncoderId::ALL.iter().enumerate() {
        for subset in EyeColor::ALL {
            let mut line = format!("{id:6} {subset:12}");
            for (ci, ch) in Channel::ALL.iter().enumerate() {
                let mut set = ScoreSet {
                    cell: CellKey {
                        encoder: *id,
                        subset,
                        channel: *ch,
                        policy: false,
                    },
                    genuine: vec![],
                    impostor: vec![],
                    failed_samples: 0,
                    excluded_pairs: 0,
                };
                for c in build_comparisons(&manifest, subset, *ch) {
                    let s = match_with_shifts(&codes[c.gallery][0][ei], &codes[c.probe][ci][ei], 8)
                        .unwrap()
                        .score;
                    match c.label {
                        Label::Genuine => set.genuine.push(s),
                        Label::Impostor => set.impostor.push(s),
                    }
                }
                let g = stats(&set.genuine).0;
                let r = CellReport::new(set);
                line += &format!("  {ch}: {:.4} (g {g:.3})", r.eer().unwrap());
            }
            println!("{line}");
        }
    }
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n = args.get(1).and_then(|s| s.parse().ok());
    match args.first().map(String::as_str) {
        Some("impostor") => impostor(n.unwrap_or(100)),
        Some("segment") => segment(n.unwrap_or(200)),
        Some("rotation") => rotation(n.unwrap_or(20)),
        Some("dilation") => dilation(n.unwrap_or(20)),
        Some("eval") => eval(),
        Some("fast") => fast_eval(),
        _ => eprintln!("usage: calibrate impostor|segment|rotation|dilation|eval|fast [n]"),
    }
}
