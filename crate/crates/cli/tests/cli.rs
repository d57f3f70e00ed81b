use std::path::Path;
use std::process::{Command, Output};

fn srcscreen(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srcscreen"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

const SMALL: &str = r#"{
    "population": {"m": 30, "d": 10, "k": 4},
    "methods": ["full", "random", "balanced", "empirical"],
    "estimators": ["split_averaging"],
    "seeds": [0, 1, 2]
}"#;

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = srcscreen(&["selftest"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn run_writes_expected_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = srcscreen(&["run", "--config", &cfg, "--out", "r.csv"], dir.path());
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "method,estimator,regime,seed,swept_param,swept_value,error_sin_theta,subset_size,wall_ms,screening_reason"
    );
    assert_eq!(lines.count(), 12);
}

#[test]
fn worker_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    assert!(srcscreen(
        &["run", "--config", &cfg, "--out", "a.csv", "--workers", "1"],
        dir.path()
    )
    .status
    .success());
    assert!(srcscreen(
        &["run", "--config", &cfg, "--out", "b.csv", "--workers", "4"],
        dir.path()
    )
    .status
    .success());
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn seed_offset_shifts_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = srcscreen(
        &[
            "run",
            "--config",
            &cfg,
            "--out",
            "r.json",
            "--format",
            "json",
            "--seed-offset",
            "10",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("r.json")).unwrap();
    assert!(text.contains("\"seed\": 12"));
    assert!(!text.contains("\"seed\": 0,"));
}

#[test]
fn plotdata_summarises_groups() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    assert!(srcscreen(&["run", "--config", &cfg, "--out", "r.csv"], dir.path())
        .status
        .success());
    let out = srcscreen(
        &["plotdata", "--input", "r.csv", "--group-by", "method", "--out", "p.csv"],
        dir.path(),
    );
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("p.csv")).unwrap();
    assert!(text.starts_with("method,n,failed,mean_error,std_error,flag"));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn bad_config_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write_config(dir.path(), r#"{"populaton": {}}"#);
    assert_eq!(
        srcscreen(&["run", "--config", &unknown], dir.path()).status.code(),
        Some(2)
    );
    let odd_k = write_config(dir.path(), r#"{"population": {"k": 5}}"#);
    assert_eq!(
        srcscreen(&["run", "--config", &odd_k], dir.path()).status.code(),
        Some(2)
    );
    let missing = srcscreen(&["run", "--config", "nope.json"], dir.path());
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn unreadable_results_exit_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("junk.csv"), "not,a,results\nfile,at,all\n").unwrap();
    let out = srcscreen(&["plotdata", "--input", "junk.csv"], dir.path());
    assert_eq!(out.status.code(), Some(3));
}
