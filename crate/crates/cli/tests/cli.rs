use std::path::Path;
use std::process::{Command, Output};

fn lrmd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lrmd")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("run.json");
    let body = r#"{"system":{"kind":"generated","waters":32,"edge":10.5},"steps":12,"ensemble":"nve","dt":0.5,"seed":3,
"neighbor":{"cutoff":4.0,"skin":1.0,"rebuild_interval":10},
"electrostatics":{"mesh":[12,12,12]},"topology":{"node_grid":[2,1,1]}}"#;
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn help_documents_every_flag() {
    let run = stdout(&lrmd(&["run", "--help"]));
    for flag in ["--config", "--seed", "--out-dir", "--overlap", "--payload-mode", "--balance-mode"] {
        assert!(run.contains(flag), "{flag} missing from run --help");
    }
    assert!(run.contains("ring-corrected") && run.contains("i32x12"));
    let top = stdout(&lrmd(&["--help"]));
    for cmd in ["gen", "run", "bench-fft", "bench-balance", "validate"] {
        assert!(top.contains(cmd), "{cmd}");
    }
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(lrmd(&["run", "--payload-mode", "f32"]).status.code(), Some(2));
    assert_eq!(lrmd(&["frobnicate"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"system":{"kind":"generated","waters":4,"edge":10.0},"electrostatics":{"mesh":[8,8,8]},"dt":-1}"#,
    )
    .unwrap();
    let o = lrmd(&["run", "--config", bad.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("dt"));
}

#[test]
fn gen_writes_systems() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("w.json");
    let o = lrmd(&[
        "gen",
        "--waters",
        "128",
        "--edge",
        "16.4",
        "--seed",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("atoms 384 wannier_centroids 128"));
    let empty = dir.path().join("e.json");
    let o = lrmd(&["gen", "--waters", "0", "--edge", "10", "--out", empty.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("atoms 0 wannier_centroids 0"));
    let xyz = dir.path().join("r.xyz");
    let o = lrmd(&[
        "gen",
        "--waters",
        "8",
        "--edge",
        "8",
        "--replicate",
        "2,1,1",
        "--out",
        xyz.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("atoms 48 wannier_centroids 16"));
}

#[test]
fn run_is_reproducible_and_overlap_keeps_energies() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for (out, extra) in [(&a, None), (&b, None), (&c, Some("--overlap"))] {
        let mut args = vec!["run", "--config", cfg.as_str(), "--out-dir", out.to_str().unwrap()];
        args.extend(extra);
        let o = lrmd(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(read(&a, "energy.csv").lines().count(), 14);
    for f in [
        "energy.csv",
        "timings.csv",
        "netstats.json",
        "netstats.csv",
        "performance.json",
        "balance.csv",
    ] {
        assert_eq!(read(&a, f), read(&b, f), "{f}");
    }
    assert_eq!(read(&a, "energy.csv"), read(&c, "energy.csv"));
    assert_ne!(read(&a, "timings.csv"), read(&c, "timings.csv"));
}

#[test]
fn bench_fft_counts_match_formula() {
    let o = lrmd(&["bench-fft", "--mesh", "12,18,12", "--grid", "2,3,2", "--iterations", "2"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let rows: Vec<Vec<&str>> = out.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    // A 6x6x6 brick holds 432 scalars.
    for (row, want) in rows.iter().zip(["144", "72", "36"]) {
        assert_eq!(&row[4..8], &[want; 4]);
    }
    let err: f64 = rows[0][9].parse().unwrap();
    assert!(err <= 1e-12, "{err}");
}

#[test]
fn bench_balance_uniform_counts_do_not_migrate() {
    let o = lrmd(&["bench-balance", "--counts", "5,5,5,5,5,5", "--steps", "3"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 4);
    for l in out.lines().skip(1) {
        let f: Vec<&str> = l.split(',').collect();
        assert_eq!((f[3], f[4], f[6]), ("0", "0", "true"));
    }
    let out = stdout(&lrmd(&["bench-balance", "--counts", "4,1,2,1"]));
    assert!(out.lines().nth(1).unwrap().ends_with(",4,3,1,true"), "{out}");
    let out = stdout(&lrmd(&["bench-balance", "--counts", "0,6,2,0"]));
    assert!(out.lines().nth(1).unwrap().ends_with(",false"), "{out}");
}

#[test]
fn bench_balance_live_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let o = lrmd(&["bench-balance", "--config", &cfg]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).lines().count() >= 2);
}

#[test]
fn validate_default_config_passes() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("v.json");
    let o = lrmd(&["validate", "--out", report.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let v: serde_json::Value = serde_json::from_str(&read(dir.path(), "v.json")).unwrap();
    let checks = v["checks"].as_array().unwrap();
    assert!(checks.len() >= 10);
    assert!(checks.iter().all(|c| c["passed"] == true));
}
