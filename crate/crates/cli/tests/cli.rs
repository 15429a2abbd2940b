use std::path::Path;
use std::process::Command;

use fluxleak_cli::manifest::{Manifest, MANIFEST_FILE};
use tempfile::TempDir;

fn fluxleak(args: &[&str], out: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_fluxleak"))
        .args(["--threads", "1", "--out"])
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

const SYNTHETIC: &str = r#"
schema_version = 1

[synthetic]
centers = [[0.0, 0.0], [3.0, 0.0]]
sigma = 0.5
prior = [0.5, 0.5]
transitions = [[0.97, 0.05], [0.03, 0.95]]
n_shots = 20000
seed = 11

[stats.bootstrap]
n_samples = 40
sample_size = 5000
seed = 5
"#;

const BRANCH: &str = r#"
schema_version = 1

[[branch]]
name = "small"
device = { preset = "A" }
hilbert = { n_flux = 6, n_fock = 14 }
n_levels_tracked = 4
"#;

fn probabilities(path: &Path) -> Vec<(String, String, f64, f64)> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|row| {
            let row = row.unwrap();
            (row[0].to_string(), row[1].to_string(), row[2].parse().unwrap(), row[3].parse().unwrap())
        })
        .collect()
}

#[test]
fn empty_config_writes_empty_manifest() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.toml", "schema_version = 1\n");
    let out = dir.path().join("out");
    let o = fluxleak(&["sweep", &cfg], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = Manifest::load(&out.join(MANIFEST_FILE)).unwrap();
    assert!(m.outputs.is_empty() && m.failures.is_empty());
}

#[test]
fn bad_config_exits_with_config_status() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.toml", "schema_version = 1\n[[branch]]\nname = \"x\"\ndevice = { preset = \"Z\" }\n");
    let o = fluxleak(&["branch", &cfg], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("branch[0].device"));
}

#[test]
fn missing_shot_file_is_io_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.toml", SYNTHETIC);
    let o = fluxleak(&["stats", "--shots", "/nonexistent/shots.csv", &cfg], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn synthetic_shots_round_trip_through_stats() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.toml", SYNTHETIC);
    let gen = dir.path().join("gen");
    let o = fluxleak(&["simulate-shots", &cfg], &gen);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let shots = gen.join("shots.csv").display().to_string();

    let a = dir.path().join("a");
    let o = fluxleak(&["stats", "--shots", &shots, &cfg], &a);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = probabilities(&a.join("stats_probabilities.csv"));
    let p = |i: &str, f: &str| rows.iter().find(|r| r.0 == i && r.1 == f).unwrap().2;
    assert!((p("g", "e") - 0.03).abs() < 0.01, "{}", p("g", "e"));
    assert!((p("e", "g") - 0.05).abs() < 0.01, "{}", p("e", "g"));

    let b = dir.path().join("b");
    let o = fluxleak(&["rerun", &a.join(MANIFEST_FILE).display().to_string()], &b);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let first = Manifest::load(&a.join(MANIFEST_FILE)).unwrap();
    first.verify(&b).unwrap();
}

#[test]
fn branch_rerun_is_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.toml", BRANCH);
    let a = dir.path().join("a");
    let o = fluxleak(&["branch", &cfg], &a);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = Manifest::load(&a.join(MANIFEST_FILE)).unwrap();
    assert_eq!(m.outputs.len(), 2);

    let b = dir.path().join("b");
    let o = fluxleak(&["rerun", &a.join(MANIFEST_FILE).display().to_string()], &b);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    m.verify(&b).unwrap();
}
