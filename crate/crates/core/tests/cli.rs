use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn wobbly(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_wobbly"));
    cmd.args(args).arg("--out").arg(dir);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

/// CSV body without the JSON header line.
fn body(path: &Path) -> String {
    let text = fs::read_to_string(path).unwrap();
    text.split_once('\n').unwrap().1.to_string()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

const SMALL_SUMS: &str = r#"{
    "birkhoff": {"n_list": [10, 100, 1000], "samples": 300, "centering": 1.14, "burn_in": 10},
    "oracle": {"n_list": [10, 100, 1000], "samples": 300, "source": "tau", "table_n": 20000}
}"#;

#[test]
fn orbit_writes_rows_header_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = wobbly(dir.path(), &["orbit", "--preset", "m1-semistable"], &[("WOBBLY_ORBIT__N", "2000")]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("orbit.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let header: Value = serde_json::from_str(lines[0].strip_prefix("# ").unwrap()).unwrap();
    assert_eq!(header["map"]["variant"], "M1-step");
    assert_eq!(header["seed"], 1);
    assert_eq!(lines[1], "n,x_n,M0,jump,residual");
    assert_eq!(lines.len(), 2 + 2001);
    assert!(lines[2].starts_with("0,5.0000000000000000e-1,"));

    let manifest: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("orbit.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["orbit"]["n"], 2000);
    assert_eq!(manifest["subcommand"], "orbit");
    assert!(manifest["artifacts"].as_array().unwrap().iter().any(|a| a == "orbit.csv"));
    assert!(manifest["wall_time_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn manifest_config_replays_the_run() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = write_config(a.path(), SMALL_SUMS);
    let out = wobbly(a.path(), &["birkhoff", "--preset", "m2-semistable", "--config", &cfg, "--seed", "7"], &[]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: Value = serde_json::from_str(&fs::read_to_string(a.path().join("birkhoff.manifest.json")).unwrap()).unwrap();
    let replay = write_config(b.path(), &manifest["config"].to_string());
    let out = wobbly(b.path(), &["birkhoff", "--config", &replay], &[]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        fs::read(a.path().join("birkhoff.csv")).unwrap(),
        fs::read(b.path().join("birkhoff.csv")).unwrap()
    );
}

#[test]
fn same_seed_gives_identical_bodies() {
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    for (d, seed) in dirs.iter().zip(["3", "3", "4"]) {
        let cfg = write_config(d.path(), SMALL_SUMS);
        let out = wobbly(d.path(), &["oracle", "--preset", "m2-semistable", "--config", &cfg, "--seed", seed], &[]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let bodies: Vec<String> = dirs.iter().map(|d| body(&d.path().join("oracle.csv"))).collect();
    assert_eq!(bodies[0], bodies[1]);
    assert_ne!(bodies[0], bodies[2]);
}

#[test]
fn pipeline_produces_a_merge_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_SUMS);
    for sub in ["birkhoff", "oracle"] {
        let out = wobbly(dir.path(), &[sub, "--preset", "m2-semistable", "--config", &cfg], &[]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let out = wobbly(dir.path(), &["merge", "--preset", "m2-semistable"], &[]);
    assert_eq!(code(&out), 0);
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("merge.json")).unwrap()).unwrap();
    let matrix = report["report"]["merge"]["matrix"].as_array().unwrap();
    assert_eq!(matrix.len(), 3);
    assert!(matrix.iter().flat_map(|r| r.as_array().unwrap()).all(|v| (0.0..=1.0).contains(&v.as_f64().unwrap())));

    // impossible thresholds fail only in acceptance mode
    let strict = [("WOBBLY_MERGE__MERGE_MAX", "0")];
    assert_eq!(code(&wobbly(dir.path(), &["merge", "--preset", "m2-semistable"], &strict)), 0);
    assert_eq!(code(&wobbly(dir.path(), &["merge", "--preset", "m2-semistable", "--check"], &strict)), 2);
    let manifest: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("merge.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["check_passed"], false);
}

#[test]
fn errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&wobbly(dir.path(), &["orbit", "--preset", "no-such-preset"], &[])), 1);
    assert_eq!(code(&wobbly(dir.path(), &["orbit"], &[])), 1);
    assert_eq!(code(&wobbly(dir.path(), &["orbit", "--bogus"], &[])), 1);
    assert_eq!(code(&wobbly(dir.path(), &["fly", "--preset", "lsv-stable"], &[])), 1);
    let cfg = write_config(dir.path(), r#"{"orbit": {"n": 10, "length": 3}}"#);
    assert_eq!(code(&wobbly(dir.path(), &["orbit", "--preset", "lsv-stable", "--config", &cfg], &[])), 1);
    let env = [("WOBBLY_ORBIT__COUNT", "3")];
    assert_eq!(code(&wobbly(dir.path(), &["orbit", "--preset", "lsv-stable"], &env)), 1);
    // merge without inputs is an I/O error
    assert_eq!(code(&wobbly(dir.path(), &["merge", "--preset", "lsv-stable"], &[])), 1);
}

#[test]
fn check_mode_passes_on_a_sound_orbit() {
    let dir = tempfile::tempdir().unwrap();
    let out = wobbly(dir.path(), &["orbit", "--preset", "m1-semistable", "--check"], &[("WOBBLY_ORBIT__N", "20000")]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("orbit.json")).unwrap()).unwrap();
    assert!(report["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));
}
