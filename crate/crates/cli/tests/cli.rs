//! End-to-end checks of the binary: exit codes, emitted files, and the
//! reproducibility of CSV output.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_gevrey")
}

fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn tmp_dir(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("gevrey-cli-test-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

#[test]
fn validate_passes_on_canonical() {
    let out = tmp_dir("validate");
    let status = Command::new(bin())
        .args(["--spec"])
        .arg(repo_config("canonical.toml"))
        .args(["--out"])
        .arg(&out)
        .arg("validate")
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("validate.json").exists());
}

#[test]
fn validate_flags_broken_structure_with_exit_1() {
    let out = tmp_dir("invalid");
    let text = std::fs::read_to_string(repo_config("canonical.toml")).unwrap();
    // d_D = 2 breaks d_D = (delta_D - 1)(k + 1)
    let broken = text.replace("d = 3", "d = 2");
    let spec_path = out.join("broken.toml");
    std::fs::write(&spec_path, broken).unwrap();
    let output = Command::new(bin())
        .args(["--spec"])
        .arg(&spec_path)
        .args(["--out"])
        .arg(&out)
        .arg("validate")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(
        stdout.contains("FAIL d_D = (delta_D - 1)(k + 1)"),
        "stdout: {stdout}"
    );
}

#[test]
fn config_errors_exit_3() {
    let out = tmp_dir("confErr");
    let output = Command::new(bin())
        .args(["--spec", "/nonexistent/path.toml"])
        .args(["--out"])
        .arg(&out)
        .arg("validate")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
}

#[test]
fn formal_emits_reparsable_deterministic_csv() {
    let out1 = tmp_dir("formal1");
    let out2 = tmp_dir("formal2");
    for out in [&out1, &out2] {
        let status = Command::new(bin())
            .args(["--spec"])
            .arg(repo_config("canonical.toml"))
            .args(["--out"])
            .arg(out)
            .args(["--orders", "8", "formal"])
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = std::fs::read_to_string(out1.join("series.csv")).unwrap();
    let b = std::fs::read_to_string(out2.join("series.csv")).unwrap();
    assert_eq!(a, b, "same config must give bit-identical output");
    assert!(a.starts_with("# config-hash:"));
    assert!(out1.join("norms.csv").exists());
    assert!(out1.join("formal.json").exists());
}

#[test]
fn roots_and_cover_reports() {
    let out = tmp_dir("geom");
    let status = Command::new(bin())
        .args(["--spec"])
        .arg(repo_config("canonical.toml"))
        .args(["--out"])
        .arg(&out)
        .arg("roots")
        .status()
        .unwrap();
    assert!(status.success());
    // root CSV is re-parseable as numbers
    let roots = std::fs::read_to_string(out.join("roots.csv")).unwrap();
    let data_lines: Vec<&str> = roots
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with('m'))
        .collect();
    assert!(!data_lines.is_empty());
    for l in &data_lines {
        let cols: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(cols.len(), 4);
    }
    let status = Command::new(bin())
        .args(["--spec"])
        .arg(repo_config("canonical.toml"))
        .args(["--out"])
        .arg(&out)
        .arg("cover")
        .status()
        .unwrap();
    assert!(status.success());
    let cover: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("covering.json")).unwrap())
            .unwrap();
    assert_eq!(cover["report"]["sectors"].as_array().unwrap().len(), 5);
}

#[test]
fn inadmissible_direction_exits_2() {
    let out = tmp_dir("baddir");
    let output = Command::new(bin())
        .args(["--spec"])
        .arg(repo_config("canonical.toml"))
        .args(["--out"])
        .arg(&out)
        .args(["roots", "--direction", "1.5707963"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}
