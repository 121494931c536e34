//! End-to-end checks of the binary: run a small study, verify it, and make
//! sure failure modes map to the documented exit codes.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bdrne"))
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("study.toml");
    std::fs::write(
        &path,
        r#"
[market]
n = 2
characteristics = [6.0, 4.0]
costs = [6.0, 5.0]

[truth]
shape = 15.0
theta_star = [[50.0, 40.0], [50.0, 40.0]]

[prior]
a0 = [[1.0, 1.0], [1.0, 1.0]]
b0 = [[1.0, 1.0], [0.5, 0.5]]

[sweep]
eps = [0.1]
data_sizes = [5]
eps_hat = [0.1]

[solver]
n_theta = 10
n_xi = 10
true_reference_n = 20
true_reference_n_xi = 200

[seeds]
data = 7
scenario = 8

[output]
directory = "unused"
"#,
    )
    .unwrap();
    path
}

#[test]
fn run_then_verify_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let out = dir.path().join("results");

    let status = bin()
        .args(["run"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("results.csv").exists());
    assert!(out.join("results.json").exists());
    assert!(out.join("plotdata").is_dir());

    let status = bin().arg("verify").arg(&out).status().unwrap();
    assert!(status.success());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let status = bin().arg("run").arg(&config).arg("--out").arg(out).status().unwrap();
        assert!(status.success());
    }
    for name in ["results.csv", "results.json"] {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn variant_filters_limit_the_rows() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let out = dir.path().join("filtered");
    let status = bin()
        .arg("run")
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .args(["--only-variant", "bdrne", "--only-variant", "bane", "--only-N", "5"])
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3, "expected header + 2 rows: {csv}");
    assert!(lines[1].starts_with("bdrne,"));
    assert!(lines[2].starts_with("bane,"));
}

#[test]
fn configuration_errors_exit_with_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[market]\nn = 2\nmystery_field = 1\n").unwrap();
    let output = bin().arg("run").arg(&path).output().unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("mystery_field"), "stderr: {stderr}");

    let output = bin().arg("run").arg(dir.path().join("missing.toml")).output().unwrap();
    assert_eq!(output.status.code(), Some(1));

    let output = bin().arg("verify").arg(dir.path()).output().unwrap();
    assert_eq!(output.status.code(), Some(1));
}
