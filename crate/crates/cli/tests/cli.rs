use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gustrom(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gustrom"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

/// Sweep CSV with the wall-clock column dropped.
fn untimed(csv: &str) -> Vec<String> {
    csv.lines()
        .map(|l| l.rsplit_once(',').map(|(head, _)| head.to_string()).unwrap_or_default())
        .collect()
}

#[test]
fn sweep_writes_one_row_per_site() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "[sweep]\nn_sites = 16\n");
    let out = dir.path().join("out");
    let o = gustrom(&["--config", &cfg, "--out", out.to_str().unwrap(), "sweep"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 17);
    assert!(csv.starts_with("site,h_g,w0,status,peak_xi"));
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("H_g* = "), "{summary}");
    let validation = fs::read_to_string(out.join("validation.csv")).unwrap();
    assert_eq!(validation.lines().count(), 4);
}

#[test]
fn calm_gust_preview_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "[gust]\nw0 = 0.0\n");
    let out = dir.path().join("out");
    let o = gustrom(&["--config", &cfg, "--out", out.to_str().unwrap(), "gust-preview"]);
    assert!(o.status.success());
    let csv = fs::read_to_string(out.join("gust.csv")).unwrap();
    let mut rows = 0;
    for l in csv.lines().skip(1) {
        let v: f64 = l.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(v, 0.0);
        rows += 1;
    }
    assert!(rows > 100);
}

#[test]
fn saved_rom_gives_the_same_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "[sweep]\nn_sites = 12\n");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let run = |args: &[&str]| {
        let o = gustrom(args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    };
    run(&["--config", &cfg, "--out", a.to_str().unwrap(), "build-rom"]);
    let rom = a.join("rom.bin");
    assert!(rom.exists());
    run(&["--config", &cfg, "--out", a.to_str().unwrap(), "sweep"]);
    run(&["--config", &cfg, "--out", b.to_str().unwrap(), "sweep", "--rom", rom.to_str().unwrap()]);
    let sa = fs::read_to_string(a.join("sweep.csv")).unwrap();
    let sb = fs::read_to_string(b.join("sweep.csv")).unwrap();
    assert_eq!(untimed(&sa), untimed(&sb));
}

#[test]
fn rom_for_other_settings_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let base = write_config(dir.path(), "a.toml", "[sweep]\nn_sites = 4\n");
    let other = write_config(dir.path(), "b.toml", "[sweep]\nn_sites = 4\n[model]\nu_star = 4.0\n");
    let out = dir.path().join("o");
    assert!(gustrom(&["--config", &base, "--out", out.to_str().unwrap(), "build-rom"])
        .status
        .success());
    let rom = out.join("rom.bin");
    let o = gustrom(&["--config", &other, "--out", out.to_str().unwrap(), "sweep", "--rom", rom.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(7), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "[sweep]\nn_sites = \"many\"\n");
    let o = gustrom(&["--config", &cfg, "--out", dir.path().to_str().unwrap(), "sweep"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("n_sites") || !o.stderr.is_empty());
}

#[test]
fn invalid_value_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "[sweep]\nn_sites = 1\n");
    let o = gustrom(&["--config", &cfg, "--out", dir.path().to_str().unwrap(), "sweep"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_file_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.toml");
    let o = gustrom(&["--config", missing.to_str().unwrap(), "trim"]);
    assert_eq!(o.status.code(), Some(3));
    let cfg = write_config(dir.path(), "c.toml", "[sweep]\nn_sites = 4\n");
    let rom = dir.path().join("absent.bin");
    let o = gustrom(&["--config", &cfg, "--out", dir.path().to_str().unwrap(), "sweep", "--rom", rom.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}
