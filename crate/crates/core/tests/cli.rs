use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn svlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_svlab"))
        .args(args)
        .env_remove("SVLAB_RUN_DIR")
        .output()
        .unwrap()
}

fn csvs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn simulate_is_deterministic_and_rerunnable() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b, &a] {
        let o = svlab(&[
            "simulate",
            "--system",
            "double-pendulum",
            "--trajectories",
            "10",
            "--frames",
            "20",
            "--seed",
            "7",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let first = csvs(&a);
    assert_eq!(first.len(), 10);
    assert_eq!(first, csvs(&b));
    assert_eq!(
        fs::read(a.join("config.json")).unwrap(),
        fs::read(b.join("config.json")).unwrap()
    );
}

#[test]
fn estimate_id_of_a_line_segment() {
    let dir = tempfile::tempdir().unwrap();
    let points = dir.path().join("line.csv");
    let mut text = String::from("x,y,z\n");
    let mut rng = svlab::numcore::Rng::new(5);
    for _ in 0..1500 {
        let u = rng.uniform(0.0, 1.0);
        text.push_str(&format!("{u},{},{}\n", 2.0 * u + 1.0, -0.5 * u));
    }
    fs::write(&points, text).unwrap();
    let out = dir.path().join("id");
    let o = svlab(&[
        "estimate-id",
        "--points",
        points.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let est: serde_json::Value = serde_json::from_slice(&fs::read(out.join("id.json")).unwrap()).unwrap();
    let value = est["value"].as_f64().unwrap();
    assert!((0.9..=1.1).contains(&value), "{value}");
    assert!(out.join("id_k.csv").exists());
}

#[test]
fn help_lists_configuration_keys() {
    let o = svlab(&["--help"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    for key in [
        "system.kind",
        "train.beta",
        "simulation.dt_frame",
        "dataset.geometry.width",
    ] {
        assert!(text.contains(key), "{key} missing from --help");
    }
}

#[test]
fn usage_and_config_errors_exit_with_3() {
    assert_eq!(svlab(&["simulate", "--bogus"]).status.code(), Some(3));
    assert_eq!(svlab(&["no-such-command"]).status.code(), Some(3));
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = svlab(&["simulate", "--set", "train.betta=2", "--out", out]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("train.betta"));
}
