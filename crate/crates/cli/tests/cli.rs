use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = "spin = 0.05\ngrid.m = 1\ngrid.n_r = 128\ngrid.r_out = 40\ngrid.v_max = 20\ndata.center = 8\n";

fn kerrlab(dir: &TempDir, cmd: &str, config: &str, extra: &[&str]) -> Output {
    let path = dir.path().join("run.cfg");
    std::fs::write(&path, config).unwrap();
    let out = dir.path().join("out");
    Command::new(env!("CARGO_BIN_EXE_kerrlab"))
        .args([cmd, path.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .args(extra)
        .output()
        .unwrap()
}

fn data_rows(path: &Path) -> Vec<Vec<f64>> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}

#[test]
fn parse_errors_exit_with_two_and_list_every_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = kerrlab(&dir, "evolve", "spin = 0.1\nbogus = 3\ngrid.n_r = many\nno equals sign\n", &[]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "ParseError");
    let text = err["messages"].to_string();
    for line in ["line 2", "line 3", "line 4"] {
        assert!(text.contains(line), "{text}");
    }
    assert!(!dir.path().join("out").exists());
}

#[test]
fn out_of_range_spin_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = kerrlab(&dir, "trapped-set", "spin = 0.9\n", &[]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "ValidationError");
    assert!(err["messages"].to_string().contains("geometry"));
}

#[test]
fn forbidden_geodesic_start_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "geodesic.mode = constants\ngeodesic.k = 1e6\ngeodesic.l = 0\ngeodesic.r0 = 10\n";
    let out = kerrlab(&dir, "geodesic", cfg, &[]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "RuntimeError");
}

#[test]
fn failed_property_check_exits_with_four_only_under_assert() {
    let dir = tempfile::tempdir().unwrap();
    // the pulse has barely moved after one unit of time
    let cfg = format!("{SMALL}observe.local_probe = 1\nobserve.local_lo = 4\nobserve.local_hi = 12\n");
    assert_eq!(kerrlab(&dir, "evolve", &cfg, &[]).status.code(), Some(0));
    let out = kerrlab(&dir, "evolve", &cfg, &["--assert"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("local energy decay"));
}

#[test]
fn trapped_set_table_has_401_rows_near_the_photon_sphere() {
    let dir = tempfile::tempdir().unwrap();
    let out = kerrlab(&dir, "trapped-set", "spin = 0.05\n", &["--assert"]);
    assert_eq!(out.status.code(), Some(0));
    let rows = data_rows(&dir.path().join("out/trapped_set.csv"));
    assert_eq!(rows.len(), 401);
    assert!(rows.iter().all(|r| (r[2] - 3.0).abs() <= 0.1));
}

#[test]
fn zero_amplitude_gives_a_zero_series() {
    let dir = tempfile::tempdir().unwrap();
    let out = kerrlab(&dir, "evolve", &format!("{SMALL}data.amplitude = 0\n"), &["--assert"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = data_rows(&dir.path().join("out/series.csv"));
    assert!(rows.len() > 2);
    assert!(rows.iter().all(|r| r[1..].iter().all(|&x| x == 0.0)));
}

#[test]
fn converge_reports_an_order_and_outputs_embed_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = kerrlab(&dir, "converge", SMALL, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/converge.json")).unwrap()).unwrap();
    assert!(json["order"].as_f64().unwrap().is_finite());
    assert_eq!(json["levels"].as_array().unwrap().len(), 3);
    assert_eq!(json["config"]["grid.n_r"], "128");
    assert_eq!(json["config"]["spin"], "0.05");
    // keys left at their defaults are resolved too
    assert_eq!(json["config"]["grid.cfl"], "0.25");

    let listed = String::from_utf8(out.stdout).unwrap();
    assert!(!listed.trim().is_empty());
    for file in listed.lines() {
        let text = std::fs::read_to_string(file).unwrap();
        assert!(text.contains("grid.n_r") && text.contains("128"), "{file}");
    }
}
