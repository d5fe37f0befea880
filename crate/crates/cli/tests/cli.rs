use std::path::Path;
use std::process::{Command, Output};

fn xiris(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xiris"))
        .args(args)
        .env_remove("XIRIS_CACHE_DIR")
        .output()
        .expect("spawn xiris")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn synth(dir: &Path, subjects: &str, seed: &str) {
    let o = xiris(&[
        "synth",
        "--subjects",
        subjects,
        "--seed",
        seed,
        "--n-nir",
        "2",
        "--n-vis",
        "1",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn synth_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    synth(a.path(), "3", "7");
    synth(b.path(), "3", "7");
    let ta = tree(a.path());
    assert_eq!(ta.len(), 2 + 6 * 2 + 6);
    assert!(ta == tree(b.path()));
}

#[test]
fn self_match_is_zero() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path(), "1", "3");
    let img = d.path().join("nir/s001_left_0.png");
    let o = xiris(&[
        "match",
        img.to_str().unwrap(),
        img.to_str().unwrap(),
        "--encoder",
        "gabor",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let line = stdout(&o);
    let f: Vec<&str> = line.split_whitespace().collect();
    assert_eq!(f.len(), 3);
    assert_eq!(f[0], "0.000000");
    assert_eq!(f[1], "0");
    assert!(f[2].parse::<usize>().unwrap() >= 64);
}

#[test]
fn enrolled_codes_match_like_images() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path(), "1", "3");
    let a = d.path().join("nir/s001_left_0.png");
    let b = d.path().join("nir/s001_left_1.png");
    let code = d.path().join("a.ixc");
    let o = xiris(&[
        "enroll",
        a.to_str().unwrap(),
        "--encoder",
        "dct",
        "--out",
        code.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let from_code = xiris(&[
        "match",
        code.to_str().unwrap(),
        b.to_str().unwrap(),
        "--encoder",
        "dct",
    ]);
    let from_images = xiris(&[
        "match",
        a.to_str().unwrap(),
        b.to_str().unwrap(),
        "--encoder",
        "dct",
    ]);
    assert_eq!(stdout(&from_code), stdout(&from_images));
    let score: f64 = stdout(&from_code)
        .split_whitespace()
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!(score < 0.3, "genuine score {score}");
}

#[test]
fn errors_are_one_machine_line() {
    let o = xiris(&["match", "/nonexistent/a.png", "/nonexistent/b.png"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error: UnreadableFile: "), "{err}");
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(xiris(&["match"]).status.code(), Some(2));
    assert_eq!(xiris(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        xiris(&["match", "a", "b", "--encoder", "sift"])
            .status
            .code(),
        Some(2)
    );
    assert!(xiris(&["evaluate", "--help"]).status.success());
}

#[test]
fn segment_dump_has_two_circles() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path(), "1", "5");
    let img = d.path().join("vis/s001_right_0.png");
    let out = d.path().join("dump");
    let o = xiris(&[
        "segment",
        img.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("s001_right_0.circles.txt")).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .map(|l| l.split_whitespace().map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.len() == 3));
    assert!(rows[0][2] < rows[1][2]);
    assert!(out.join("s001_right_0.mask.png").exists());

    let o = xiris(&[
        "normalize",
        img.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let tex = out.join("s001_right_0.texture.png");
    assert_eq!(image_dims(&tex), (512, 64));
}

fn image_dims(p: &Path) -> (u32, u32) {
    // PNG IHDR: width and height are big-endian at bytes 16..24
    let b = std::fs::read(p).unwrap();
    (
        u32::from_be_bytes(b[16..20].try_into().unwrap()),
        u32::from_be_bytes(b[20..24].try_into().unwrap()),
    )
}

#[test]
fn evaluate_writes_summary_and_is_worker_independent() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path(), "2", "9");
    let manifest = d.path().join("manifest.csv");
    let cfg = d.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "encoders = gabor\nsubsets = blue, green, brown_hazel\n",
    )
    .unwrap();
    let mut outputs = Vec::new();
    for workers in ["1", "2"] {
        let out = d.path().join(format!("rep{workers}"));
        let o = xiris(&[
            "evaluate",
            "--manifest",
            manifest.to_str().unwrap(),
            "--config",
            cfg.to_str().unwrap(),
            "--workers",
            workers,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(stdout(&o).lines().count(), 9);
        outputs.push(tree(&out));
    }
    let summary = &outputs[0]
        .iter()
        .find(|(n, _)| n == "summary.csv")
        .unwrap()
        .1;
    assert_eq!(String::from_utf8_lossy(summary).lines().count(), 1 + 9);
    assert!(outputs[0] == outputs[1]);
}

#[test]
fn cache_dir_comes_from_environment() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path(), "1", "4");
    let cache = d.path().join("cache");
    let cfg = d.path().join("run.cfg");
    std::fs::write(&cfg, "encoders = dct\nchannels = red\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_xiris"))
        .args(["evaluate", "--manifest"])
        .arg(d.path().join("manifest.csv"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(d.path().join("rep"))
        .env("XIRIS_CACHE_DIR", &cache)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(std::fs::read_dir(&cache).unwrap().count() > 0);
}
