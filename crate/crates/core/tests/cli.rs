use std::process::Command;

use shapefrac::cli::{read_step_csv, CSV_HEADER};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_shapefrac"))
}

#[test]
fn bogus_benchmark_exits_with_usage_status() {
    let out = bin().args(["--benchmark", "bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.trim().lines().count(), 1, "{err}");
}

#[test]
fn unknown_config_key_and_invalid_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "benchmark = tension\nwobble = 3\n").unwrap();
    let out = bin().arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bin().args(["--step-size", "0"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().args(["--config", "/nonexistent/run.cfg"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_mesh_file_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["--mesh", "/nonexistent/mesh.msh", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn short_tension_run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("short.cfg");
    std::fs::write(&cfg, "coarse_until = 2e-3\n").unwrap();
    let out = bin()
        .args(["--benchmark", "tension", "--max-displacement", "2e-3", "--snapshot-every", "1", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let csv = std::fs::read_to_string(dir.path().join("steps.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some(CSV_HEADER));
    let records = read_step_csv(&csv).unwrap();
    assert_eq!(records.len(), 2);
    assert!(records.windows(2).all(|w| w[1].crack_length >= w[0].crack_length - 1e-12));

    for step in [1, 2] {
        let vtk = std::fs::read_to_string(dir.path().join(format!("snapshot_{step}.vtk"))).unwrap();
        assert!(vtk.starts_with("# vtk DataFile Version 3.0"));
        let points: usize = vtk.lines().find(|l| l.starts_with("POINTS")).unwrap().split_whitespace().nth(1).unwrap().parse().unwrap();
        assert_eq!(points, records[step - 1].nodes);
        for key in ["VECTORS displacement", "VECTORS deformation", "SCALARS phi", "SCALARS quality"] {
            assert!(vtk.contains(key), "{key}");
        }
    }
    let summary = std::fs::read_to_string(dir.path().join("run.summary")).unwrap();
    assert!(summary.contains("benchmark=tension"));
    assert!(summary.contains("nu=1\n"));
    assert!(summary.contains("onset_displacement="));
    // no temporary files left behind
    let names: Vec<String> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    assert!(names.iter().all(|n| !n.ends_with(".tmp")), "{names:?}");
    assert_eq!(names.len(), 5, "{names:?}");
}
