use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn semithick(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semithick")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn build(dir: &Path, name: &str, threads: &str) -> PathBuf {
    let p = dir.join(name);
    let o = semithick(&["--threads", threads, "build", "--out", p.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    p
}

#[test]
fn outputs_do_not_depend_on_the_thread_count() {
    let dir = TempDir::new().unwrap();
    let a = build(dir.path(), "a.json", "1");
    let b = build(dir.path(), "b.json", "4");
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let basin = |threads: &str| {
        let o = semithick(&[
            "--threads", threads, "basin", "--model", a.to_str().unwrap(),
            "--samples", "20000", "--ladder", "0,8", "--seed", "7",
        ]);
        assert_eq!(code(&o), 0);
        o.stdout
    };
    let one = basin("1");
    assert_eq!(one, basin("3"));
    assert!(String::from_utf8(one).unwrap().starts_with("t,p_in,ci_in,p_unresolved,ci_unresolved\n"));

    let freq = |threads: &str| {
        let o = semithick(&[
            "--threads", threads, "orbit", "--model", a.to_str().unwrap(),
            "--bernoulli", "3", "--steps", "20000", "--words", "3",
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        o.stdout
    };
    assert_eq!(freq("1"), freq("2"));
}

#[test]
fn verify_passes_on_a_fresh_model() {
    let dir = TempDir::new().unwrap();
    let m = build(dir.path(), "m.json", "2");
    let json = dir.path().join("r.json");
    let o = semithick(&[
        "verify", "--model", m.to_str().unwrap(), "--grid", "20000", "--fd-points", "2000",
        "--json", json.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let reports: Value = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    assert!(reports.as_array().unwrap().len() >= 4);
}

#[test]
fn tampered_model_is_rejected() {
    let dir = TempDir::new().unwrap();
    let m = build(dir.path(), "m.json", "1");
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(&m).unwrap()).unwrap();
    let x = v["model"]["regions"]["uk"]["x"][1].as_f64().unwrap();
    v["model"]["regions"]["uk"]["x"][1] = Value::from(x * (1.0 + 1e-12));
    std::fs::write(&m, v.to_string()).unwrap();
    let o = semithick(&["verify", "--model", m.to_str().unwrap(), "--grid", "1000"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("model.regions.uk.x[1]"));

    std::fs::write(&m, "{\"format\": \"semithick-model\", \"version\": 9}").unwrap();
    assert_eq!(code(&semithick(&["verify", "--model", m.to_str().unwrap()])), 3);
    assert_eq!(code(&semithick(&["verify", "--model", dir.path().join("missing").to_str().unwrap()])), 3);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let m = build(dir.path(), "m.json", "1");
    let m = m.to_str().unwrap();
    assert_eq!(code(&semithick(&["basin", "--model", m, "--samples", "0"])), 2);
    assert_eq!(code(&semithick(&["stripes", "--model", m, "--levels", "0"])), 2);
    assert_eq!(code(&semithick(&["orbit", "--model", m, "--periodic", "012", "--words", "2"])), 2);
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "version = 1\n[run]\nsede = 3\n").unwrap();
    assert_eq!(code(&semithick(&["--config", cfg.to_str().unwrap(), "build", "--out", m])), 2);
}

#[test]
fn oversized_gaps_fail_the_build_and_name_the_sum() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "version = 1\n[model]\ngap_theta = 1.5\n").unwrap();
    let out = dir.path().join("m.json");
    let o = semithick(&["--config", cfg.to_str().unwrap(), "build", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("removes total length"));
    assert!(!out.exists());
}

#[test]
fn stripes_are_grouped_by_boundary_and_level() {
    let dir = TempDir::new().unwrap();
    let m = build(dir.path(), "m.json", "1");
    let o = semithick(&["stripes", "--model", m.to_str().unwrap(), "--levels", "3", "--points", "9"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("boundary,level,curve,word,x,y"));
    let mut groups: Vec<(String, u32)> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].parse().unwrap())
        })
        .collect();
    groups.dedup();
    groups.sort();
    groups.dedup();
    assert_eq!(groups.len(), 2 * (3 + 1));
}

#[test]
fn render_writes_a_binary_graymap() {
    let dir = TempDir::new().unwrap();
    let m = build(dir.path(), "m.json", "1");
    let img = dir.path().join("r.pgm");
    let o = semithick(&[
        "render", "--model", m.to_str().unwrap(), "--width", "16", "--height", "8", "--steps", "4",
        "--out", img.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let bytes = std::fs::read(img).unwrap();
    let header = b"P5 16 8 255\n";
    assert_eq!(&bytes[..header.len()], header);
    assert_eq!(bytes.len(), header.len() + 16 * 8);
}
