use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use breastsos::dataset::tensor::{read_f32, write_f32};
use ndarray::{Array3, Ix2};

fn breastsos(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_breastsos"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = breastsos(args);
    assert!(
        out.status.success(),
        "{args:?}: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn small_grid_config(dir: &Path) -> PathBuf {
    let path = dir.join("config.json");
    let json = r#"{"pipeline": {"grid": {"nx": 64, "nz": 96, "dx": 5.859375e-5, "dz": 5.859375e-5}}}"#;
    fs::write(&path, json).unwrap();
    path
}

// Relative path -> contents, for every file under `dir`.
fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn gen_phantom_is_repeatable_and_axial_major() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        ok(&["gen-phantom", "--class", "gland", "--seed", "7", "--grid", "256x384", "--out", d.to_str().unwrap()]);
    }
    let strip = |t: Vec<(PathBuf, Vec<u8>)>| t.into_iter().filter(|(p, _)| p != Path::new("run_config.json")).collect::<Vec<_>>();
    let (ta, tb) = (strip(tree(&a)), strip(tree(&b)));
    assert!(!ta.is_empty());
    assert_eq!(ta, tb);
    let mut ustn = 0;
    for (p, _) in &ta {
        if p.extension().is_some_and(|e| e == "ustn") {
            let arr = read_f32::<Ix2>(&a.join(p)).unwrap();
            assert_eq!(arr.dim(), (384, 256), "{}", p.display());
            ustn += 1;
        }
    }
    assert!(ustn > 0);
    assert!(a.join("run_config.json").exists());
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("x");
    let o = breastsos(&["gen-phantom", "--class", "bogus", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));

    let missing = tmp.path().join("nowhere");
    for cmd in [
        vec!["simulate", "--phantom"],
        vec!["process", "--channels"],
        vec!["render", "--sample"],
        vec!["estimate", "--channels"],
        vec!["estimate", "--corpus"],
    ] {
        let mut args = cmd.clone();
        args.push(missing.to_str().unwrap());
        let o = breastsos(&args);
        assert_eq!(o.status.code(), Some(2), "{cmd:?}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("nowhere"), "{cmd:?}");
    }
    assert_eq!(breastsos(&["gen-phantom", "--class", "gland", "--grid", "8x8"]).status.code(), Some(2));
    assert_eq!(breastsos(&["build-dataset", "--n", "0"]).status.code(), Some(2));
    assert_eq!(breastsos(&["estimate", "--channels", ".", "--sweep", "1700:1400:5"]).status.code(), Some(2));
}

#[test]
fn render_of_zero_iq_is_black() {
    let tmp = tempfile::tempdir().unwrap();
    let sample = tmp.path().join("sample");
    fs::create_dir_all(&sample).unwrap();
    write_f32(&sample.join("input.ustn"), &Array3::<f32>::zeros((6, 40, 30))).unwrap();
    let out = tmp.path().join("png");
    ok(&["render", "--sample", sample.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let img = image::open(out.join("bmode.png")).unwrap().into_luma8();
    assert_eq!(img.dimensions(), (30, 40));
    assert!(img.pixels().all(|p| p.0[0] == 0));
    assert!(out.join("bmode_plane2.png").exists());
    assert!(out.join("run_config.json").exists());
}

#[test]
fn build_dataset_is_independent_of_jobs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_grid_config(tmp.path());
    let runs: Vec<PathBuf> = ["1", "8"]
        .iter()
        .map(|jobs| {
            let out = tmp.path().join(format!("jobs{jobs}"));
            ok(&[
                "build-dataset", "--n", "6", "--seed", "1", "--jobs", jobs,
                "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(),
            ]);
            out
        })
        .collect();
    let (a, b) = (tree(&runs[0].join("corpus")), tree(&runs[1].join("corpus")));
    assert_eq!(a.len(), 6 * 3 + 1);
    assert_eq!(a, b);
    assert_eq!(fs::read(runs[0].join("stats.json")).unwrap(), fs::read(runs[1].join("stats.json")).unwrap());

    // scored against the constant beamforming speed when no prediction exists
    let report = tmp.path().join("report.json");
    ok(&[
        "estimate", "--corpus", runs[0].join("corpus").to_str().unwrap(),
        "--report", report.to_str().unwrap(), "--config", cfg.to_str().unwrap(),
    ]);
    let rep: serde_json::Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    assert_eq!(rep["per_class"].as_object().unwrap().len(), 6);

    let sample = runs[0].join("corpus").join("s000000");
    let png = tmp.path().join("render");
    ok(&["render", "--sample", sample.to_str().unwrap(), "--out", png.to_str().unwrap()]);
    for f in ["bmode.png", "speed.png", "bmode_-8deg.png", "bmode_+0deg.png", "bmode_+8deg.png"] {
        assert!(png.join(f).exists(), "{f}");
    }
    let b = image::open(png.join("bmode.png")).unwrap().into_luma8();
    assert_eq!(b.dimensions(), (64, 96));
    assert_eq!(b.pixels().map(|p| p.0[0]).max(), Some(255));
}

#[test]
fn homogeneous_fixture_sweep_recovers_1500() {
    let tmp = tempfile::tempdir().unwrap();
    let (ph, ch) = (tmp.path().join("phantom"), tmp.path().join("channels"));
    ok(&[
        "gen-phantom", "--class", "homogeneous", "--speed", "1500", "--seed", "3",
        "--grid", "256x384", "--out", ph.to_str().unwrap(),
    ]);
    ok(&["simulate", "--phantom", ph.to_str().unwrap(), "--out", ch.to_str().unwrap()]);
    let report = tmp.path().join("sweep.json");
    let o = ok(&[
        "estimate", "--channels", ch.to_str().unwrap(), "--sweep", "1400:1700:5",
        "--report", report.to_str().unwrap(),
    ]);
    let rep: serde_json::Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    let c = rep["c_hat"].as_f64().unwrap();
    assert!((1490.0..=1510.0).contains(&c), "{c}");
    assert!(String::from_utf8_lossy(&o.stdout).contains("c_hat"));

    let iq = tmp.path().join("iq");
    ok(&["process", "--channels", ch.to_str().unwrap(), "--c0", "1500", "--out", iq.to_str().unwrap()]);
    let input = read_f32::<ndarray::Ix3>(&iq.join("input.ustn")).unwrap();
    assert_eq!(input.dim(), (6, 384, 256));
}
