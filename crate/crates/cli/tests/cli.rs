use std::path::Path;
use std::process::{Command, Output};

fn soliton(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_soliton")).args(args).output().unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn grid_below_minimum_is_an_input_error() {
    let out = soliton(&["solve", "--domain", "disk:1", "--grid", "16"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(text(&out.stderr).contains("minimum 33"));
}

#[test]
fn unknown_experiment_lists_the_names() {
    let out = soliton(&["verify", "--domain", "disk:1", "--grid", "33", "--run", "thm99"]);
    assert_eq!(out.status.code(), Some(3));
    let err = text(&out.stderr);
    for name in ["oracle", "soliton", "barrier", "thm31", "thm43", "lemma51", "thm52", "flatside"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn bad_flag_is_an_input_error() {
    assert_eq!(soliton(&["solve", "--colour", "red"]).status.code(), Some(3));
    assert_eq!(soliton(&["--help"]).status.code(), Some(0));
}

#[test]
fn inapplicable_experiment_is_rejected() {
    let out = soliton(&["verify", "--domain", "square:1", "--grid", "33", "--run", "oracle"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn barrier_check_prints_and_writes_the_band() {
    let dir = tempfile::tempdir().unwrap();
    let out = soliton(&[
        "barrier-check",
        "--alpha",
        "0.1",
        "--samples",
        "200",
        "--seed",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let line = text(&out.stdout);
    assert!(line.starts_with("max_residual="), "{line}");
    assert!(line.trim_end().ends_with("pass=true"), "{line}");
    let band = std::fs::read_to_string(dir.path().join("band.csv")).unwrap();
    assert_eq!(band.lines().count(), 201);
}

fn report(dir: &Path, domain: &str, run: &str) -> Output {
    soliton(&[
        "report",
        "--domain",
        domain,
        "--grid",
        "49",
        "--caps",
        "8",
        "--run",
        run,
        "--seed",
        "5",
        "--out",
        dir.to_str().unwrap(),
    ])
}

#[test]
fn disk_report_writes_no_free_boundary() {
    let dir = tempfile::tempdir().unwrap();
    let out = report(dir.path(), "disk:1", "oracle,soliton");
    assert!(matches!(out.status.code(), Some(0 | 1)), "{}", text(&out.stderr));
    for f in ["report.json", "u.csv", "h.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    assert!(!dir.path().join("gamma.csv").exists());
    assert!(!dir.path().join("band.csv").exists());
    let stdout = text(&out.stdout);
    assert!(stdout.contains("oracle_max_error"));
}

#[test]
fn square_report_exports_the_flat_side() {
    let dir = tempfile::tempdir().unwrap();
    let out = report(dir.path(), "square:1", "flatside");
    assert!(matches!(out.status.code(), Some(0 | 1)), "{}", text(&out.stderr));
    assert!(text(&out.stdout).contains("flat_area="));
    for f in ["report.json", "u.csv", "h.csv", "gamma.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn same_seed_gives_identical_reports() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    report(a.path(), "disk:1", "thm31,barrier");
    report(b.path(), "disk:1", "thm31,barrier");
    let ra = std::fs::read(a.path().join("report.json")).unwrap();
    assert_eq!(ra, std::fs::read(b.path().join("report.json")).unwrap());
    assert!(a.path().join("band.csv").exists());
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# coarse run\ndomain = disk:1\ngrid = 16\ncaps = 4\n").unwrap();
    let out = soliton(&["solve", "--config", cfg.to_str().unwrap(), "--grid", "33"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let err = text(&out.stderr);
    assert!(err.contains("warning: flag --grid = 33 overrides config value 16"), "{err}");
    assert!(text(&out.stdout).starts_with("converged=true"));
}

#[test]
fn solve_writes_fields_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = soliton(&["solve", "--domain", "square:1", "--grid", "33", "--caps", "4", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("solver.json")).unwrap()).unwrap();
    assert_eq!(summary["converged"], true);
    assert!(dir.path().join("u.csv").exists());
    assert!(dir.path().join("h.csv").exists());
}
