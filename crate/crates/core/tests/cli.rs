use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use radar_pcd::cloud::FeaturedCloud;
use radar_pcd::rdm::{write_checkpoint, ClassifierModel, Topology};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_radar-pcd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// One scatterer ahead and a short sideways sweep, with a small grid so the
/// back-projection stays quick.
fn write_configs(dir: &Path, frames: usize) {
    let sim = format!(
        r#"{{
  "radar": "horizontal",
  "chirps_per_frame": 16,
  "scene": {{"scatterers": [{{"position": [3.0, 0.4, 0.0], "reflectivity": 0.05}}], "noise_power": 1e-3}},
  "trajectory": {{"linear": {{"start": [0, 0, 0], "end": [0, 0.02, 0], "frames": {frames}, "dt": 0.05}}}}
}}"#
    );
    fs::write(dir.join("sim.json"), sim).unwrap();
    let recon = r#"{"saa": {"extent": {"bounds": {"min": [2.5, 0.0, -0.1], "max": [3.5, 0.8, 0.1]}}}}"#;
    fs::write(dir.join("recon.json"), recon).unwrap();
}

fn simulate(dir: &Path, out: &Path, seed: &str) -> Output {
    run(&["--seed", seed, "--config", s(&dir.join("sim.json")), "simulate", "--out", s(out)])
}

#[test]
fn simulate_writes_a_reproducible_dataset() {
    let dir = tempfile::tempdir().unwrap();
    write_configs(dir.path(), 10);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let o = simulate(dir.path(), &a, "5");
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("seed: 5"));
    assert_eq!(code(&simulate(dir.path(), &b, "5")), 0);

    let adcc: Vec<_> = fs::read_dir(a.join("adc"))
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "adcc"))
        .collect();
    assert_eq!(adcc.len(), 10);
    let poses = fs::read_to_string(a.join("poses.csv")).unwrap();
    assert_eq!(poses.lines().count(), 11);
    for rel in ["manifest.json", "poses.csv", "ref.csv", "adc/000000.adcc", "adc/000009.json"] {
        assert_eq!(fs::read(a.join(rel)).unwrap(), fs::read(b.join(rel)).unwrap(), "{rel}");
    }
    let c = dir.path().join("c");
    simulate(dir.path(), &c, "6");
    assert_ne!(fs::read(a.join("adc/000000.adcc")).unwrap(), fs::read(c.join("adc/000000.adcc")).unwrap());
}

#[test]
fn malformed_scene_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let bad = r#"{"radar": "horizontal", "scene": {"scatterers": [{"position": [1, 2], "reflectivity": 1}]},
        "trajectory": {"linear": {"start": [0,0,0], "end": [0,1,0], "frames": 2, "dt": 0.1}}}"#;
    fs::write(dir.path().join("bad.json"), bad).unwrap();
    let o = run(&["--config", s(&dir.path().join("bad.json")), "simulate", "--out", s(&dir.path().join("x"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("scene.scatterers[0].position"), "{}", stderr(&o));
}

#[test]
fn reconstruct_modes() {
    let dir = tempfile::tempdir().unwrap();
    write_configs(dir.path(), 8);
    let data = dir.path().join("ds");
    assert_eq!(code(&simulate(dir.path(), &data, "1")), 0);
    let recon = dir.path().join("recon.json");

    let o = run(&["reconstruct", "--data", s(&data), "--mode", "full"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));

    let out1 = dir.path().join("nca1");
    let o = run(&["--jobs", "1", "reconstruct", "--data", s(&data), "--mode", "nca", "--out", s(&out1)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let nca = FeaturedCloud::read_csv(&out1.join("nca.csv")).unwrap();
    assert_eq!(nca.len(), 8);
    for p in nca.positions() {
        let range = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        assert!((range - (3.0f64.powi(2) + 0.4f64.powi(2)).sqrt()).abs() < 0.0625 + 0.02, "{p:?}");
        assert!((p[1] - 0.4).abs() < 0.3, "{p:?}");
    }
    let timing: serde_json::Value = serde_json::from_slice(&fs::read(out1.join("timing.json")).unwrap()).unwrap();
    assert!(timing["point_cloud_ms_per_frame"].as_f64().unwrap() > 0.0);
    let out2 = dir.path().join("nca2");
    run(&["--jobs", "2", "reconstruct", "--data", s(&data), "--mode", "nca", "--out", s(&out2)]);
    assert_eq!(fs::read(out1.join("nca.csv")).unwrap(), fs::read(out2.join("nca.csv")).unwrap());

    let model = dir.path().join("pass.rdmc");
    write_checkpoint(&ClassifierModel::constant(Topology::default(), 30.0).unwrap(), &model).unwrap();
    let full = dir.path().join("full");
    let o = run(&[
        "--config",
        s(&recon),
        "reconstruct",
        "--data",
        s(&data),
        "--mode",
        "full",
        "--model",
        s(&model),
        "--out",
        s(&full),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let nca = FeaturedCloud::read_csv(&full.join("nca.csv")).unwrap();
    let saa = FeaturedCloud::read_csv(&full.join("saa.csv")).unwrap();
    let rdm = FeaturedCloud::read_csv(&full.join("rdm.csv")).unwrap();
    assert!(!saa.is_empty());
    let mut union = nca.positions();
    union.extend(saa.positions());
    assert_eq!(rdm.positions(), union);
    assert!(full.join("saa.voxg").exists());
}

#[test]
fn saa_needs_motion() {
    let dir = tempfile::tempdir().unwrap();
    write_configs(dir.path(), 1);
    let data = dir.path().join("ds");
    assert_eq!(code(&simulate(dir.path(), &data, "1")), 0);
    let o = run(&["--config", s(&dir.path().join("recon.json")), "reconstruct", "--data", s(&data), "--mode", "saa"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("insufficient motion"), "{}", stderr(&o));
}

#[test]
fn train_denoise_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let o = run(&["--seed", "3", "simulate", "--corpus", "3", "--out", s(&corpus)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let scene = |i: usize| corpus.join(format!("scene_{i:03}"));
    let small = r#"{"epochs": 2, "points_per_sample": 64,
        "topology": {"input_width": 8, "block_widths": [8, 8], "global_width": 16, "head_width": 8, "k": 4, "dropout": 0.5}}"#;
    fs::write(dir.path().join("train.json"), small).unwrap();
    fs::write(dir.path().join("zero.json"), r#"{"epochs": 0}"#).unwrap();
    let train = |cfg: &str, out: &str| {
        run(&[
            "--config",
            s(&dir.path().join(cfg)),
            "train",
            "--data",
            s(&scene(0)),
            s(&scene(1)),
            "--val",
            s(&scene(2)),
            "--out",
            s(&dir.path().join(out)),
        ])
    };

    let o = run(&["train", "--data", s(&scene(0)), "--out", s(&dir.path().join("m.rdmc"))]);
    assert_eq!(code(&o), 2);
    let o = train("zero.json", "z.rdmc");
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("untrained"), "{}", stderr(&o));

    let o = train("train.json", "m1.rdmc");
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(code(&train("train.json", "m2.rdmc")), 0);
    let csv1 = fs::read_to_string(dir.path().join("m1.csv")).unwrap();
    assert_eq!(csv1, fs::read_to_string(dir.path().join("m2.csv")).unwrap());
    assert_eq!(csv1.lines().count(), 3);

    let out = dir.path().join("clean.csv");
    let o = run(&[
        "denoise",
        "--model",
        s(&dir.path().join("m1.rdmc")),
        "--nca",
        s(&scene(2).join("nca.csv")),
        "--saa",
        s(&scene(2).join("saa.csv")),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(FeaturedCloud::read_csv(&out).is_ok());

    let reference = scene(0).join("ref.csv");
    let o = run(&["evaluate", "--cloud", s(&reference), "--reference", s(&reference)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["cd"], 0.0);
    assert_eq!(report["emd"], 0.0);
    assert_eq!(report["fscore"], 1.0);
    assert_eq!(report["tr"], 0.15);

    let missing = dir.path().join("missing.csv");
    let o = run(&["evaluate", "--cloud", s(&missing), "--reference", s(&reference)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("missing.csv"));

    let broken = dir.path().join("broken.csv");
    fs::write(&broken, "x,y,z\n1,2,3\n4,five,6\n").unwrap();
    let o = run(&["evaluate", "--cloud", s(&broken), "--reference", s(&reference)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(code(&run(&[])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
    assert_eq!(code(&run(&["--jobs", "0", "evaluate", "--cloud", "a", "--reference", "b"])), 2);
    assert_eq!(code(&run(&["reconstruct", "--data", ".", "--mode", "sideways"])), 2);
    assert_eq!(code(&run(&["--help"])), 0);
}
