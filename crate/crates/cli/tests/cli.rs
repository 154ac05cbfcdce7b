use std::path::Path;
use std::process::{Command, Output};

fn torusfit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_torusfit"))
        .args(args)
        .output()
        .unwrap()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn blend_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = torusfit(&[
        "blend",
        "--dense",
        "32",
        "--target",
        "abs-cos",
        "--n",
        "16",
        "--N",
        "32",
        "--out",
        arg(dir.path()),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in [
        "run_profile.csv",
        "run_residuals.csv",
        "run_summary.json",
        "run_error.svg",
    ] {
        assert!(dir.path().join(f).exists(), "missing {f}");
    }
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("run_summary.json")).unwrap(),
    )
    .unwrap();
    assert!(summary["residual_max"].as_f64().unwrap() < 1e-10);
}

#[test]
fn same_seed_same_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = torusfit(&[
            "gen-data",
            "--m",
            "40",
            "--noise",
            "0.01",
            "--seed",
            "3",
            "--out",
            arg(&d.path().join("d.csv")),
        ]);
        assert!(out.status.success());
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("d.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn regularize_from_generated_data() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    assert!(torusfit(&["gen-data", "--m", "16", "--out", arg(&data)])
        .status
        .success());
    let sol = dir.path().join("sol.json");
    let out = torusfit(&[
        "regularize",
        "--data",
        arg(&data),
        "--degree",
        "8",
        "--out",
        arg(&sol),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(sol).unwrap()).unwrap();
    assert!(v["objective_value"].as_f64().unwrap() >= 0.0);
}

#[test]
fn invalid_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = torusfit(&[
        "blend",
        "--dense",
        "32",
        "--n",
        "16",
        "--N",
        "0",
        "--out",
        arg(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let missing = torusfit(&[
        "regularize",
        "--data",
        arg(&dir.path().join("nope.csv")),
        "--degree",
        "4",
    ]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn self_check_filter_runs() {
    let out = torusfit(&["self-check", "--filter", "cutoff/", "--json"]);
    assert!(out.status.success());
    let lines: Vec<serde_json::Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 3);
    assert!(lines.iter().all(|v| v["passed"] == true));
}
