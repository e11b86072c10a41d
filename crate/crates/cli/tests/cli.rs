use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_circresp"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn circresp")
}

fn write_cfg(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("s.cfg");
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn check_accepts_shipped_configs() {
    for name in ["doubling.cfg", "arnold.cfg"] {
        let out = run(&["check", config(name).to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn noiseless_non_expanding_map_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "name = bad\n[map]\nkind = arnold\na = 0.3\nepsilon = 1.2\n[perturbation]\ns1_constant = 1\n",
    );
    let out = run(&["run", cfg.to_str().unwrap(), "--out-dir", dir.path().join("o").to_str().unwrap()]);
    assert_ne!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("expanding"));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn delta_grid_beyond_delta_max_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "name = wide\n[map]\nkind = doubling\n[perturbation]\ns1_sin = 1\ndelta_max = 0.01\n[numerics]\ndeltas = 0.04, 0.02, 0.01, 0.005\n",
    );
    let out = run(&["check", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("delta_max") && err.contains("line 8"), "{err}");
}

#[test]
fn unknown_key_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "name = x\n[map]\nkind = doubling\ncolour = red\n");
    let out = run(&["check", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let cfg = config("arnold.cfg");
    for (d, threads) in [(&a, "1"), (&b, "3")] {
        let out = run(&[
            "sweep",
            cfg.to_str().unwrap(),
            "--param",
            "numerics.mc_steps=100000",
            "--param",
            "numerics.ulam_bins=1024",
            "--out-dir",
            d.to_str().unwrap(),
            "--threads",
            threads,
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    }
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 10);
    for n in names {
        assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap(), "{n:?}");
    }
}

#[test]
fn sweep_overrides_delta_grid_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("o");
    let out = run(&[
        "sweep",
        config("doubling.cfg").to_str().unwrap(),
        "--param",
        "delta=2e-2,1e-2,5e-3,2.5e-3",
        "--param",
        "numerics.order=32",
        "--seed",
        "7",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let rem = fs::read_to_string(out_dir.join("remainders.csv")).unwrap();
    assert!(rem.starts_with("# scenario=doubling seed=7\n"));
    assert!(rem.lines().nth(2).unwrap().starts_with("2.0000000000000000e-2,"));
    let report = fs::read_to_string(out_dir.join("report.txt")).unwrap();
    assert!(report.contains("result PASS"));
}

#[test]
fn failing_check_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "sweep",
        config("doubling.cfg").to_str().unwrap(),
        "--param",
        "numerics.golden_linear_tol=1e-300",
        "--param",
        "numerics.order=16",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let report = fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(report.lines().any(|l| l.starts_with("golden_linear") && l.ends_with("FAIL")));
}
