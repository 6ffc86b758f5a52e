use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cmisr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmisr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn corpus(dir: &Path, count: usize) -> String {
    let path = dir.join("corpus");
    let p = path.to_str().unwrap();
    let out = cmisr(&["gen-corpus", "--out", p, "--count", &count.to_string(), "--size", "24", "24"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    p.to_string()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

#[test]
fn gen_corpus_writes_named_pngs() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path(), 4);
    let mut names: Vec<_> = fs::read_dir(dir.path().join("corpus"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["00_gradient.png", "01_checker.png", "02_blobs.png", "03_glyph.png"]);
}

#[test]
fn evaluation_run_writes_report_and_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let input = corpus(dir.path(), 2);
    let out = dir.path().join("out");
    let res = cmisr(&[
        "run", "--input", &input, "--scale", "2,4", "--out", out.to_str().unwrap(), "--diff-block", "4,4,8,8",
        "--diff-gain", "4",
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    let mut lines = report.lines();
    assert!(lines.next().unwrap().starts_with("image,scale,psnr_open_db,psnr_circ_db"));
    assert_eq!(report.lines().filter(|l| !l.starts_with("mean,")).count(), 5);
    assert_eq!(report.lines().filter(|l| l.starts_with("mean,")).count(), 3);
    assert!(out.join("traces/00_gradient_x2.csv").exists());
    assert!(out.join("images/01_checker_x4_circ.png").exists());
    assert!(out.join("figures/00_gradient_x2/manifest.json").exists());
}

#[test]
fn deployment_run_with_json_report() {
    let dir = tempfile::tempdir().unwrap();
    let input = corpus(dir.path(), 1);
    let out = dir.path().join("out");
    let res = cmisr(&[
        "run", "--input", &input, "--mode", "deploy", "--report", "json", "--no-artifacts", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let text = fs::read_to_string(out.join("report.json")).unwrap();
    assert!(text.contains("\"deployment\"") && text.contains("residual_initial"));
    assert!(!text.contains("psnr_open_db\": 1") && !out.join("traces").exists());
}

#[test]
fn analyze_prints_csv() {
    let dir = tempfile::tempdir().unwrap();
    let input = corpus(dir.path(), 2);
    let res = cmisr(&["analyze", "--input", &input, "--scale", "2,3"]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let stdout = String::from_utf8(res.stdout).unwrap();
    let mut lines = stdout.lines();
    assert_eq!(
        lines.next().unwrap(),
        "image,scale,mu,mu_stderr,mu_gain,lambda_lo,lambda_hi,lambda,spectral_factor,frobenius_factor"
    );
    assert_eq!(lines.count(), 4);
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let input = corpus(dir.path(), 1);
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    for args in [
        vec!["run", "--input", &input, "--scale", "5", "--out", out],
        vec!["run", "--input", &input, "--sr", "plugin", "--out", out],
        vec!["run", "--input", &input, "--dt", "-1", "--out", out],
        vec!["run", "--input", &input, "--lambda", "fast", "--out", out],
        vec!["run", "--input", &input],
    ] {
        let res = cmisr(&args);
        assert_eq!(code(&res), 2, "{args:?}: {}", String::from_utf8_lossy(&res.stderr));
    }
}

#[test]
fn missing_input_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.png");
    let res = cmisr(&["run", "--input", missing.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&res), 3, "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn failing_plugin_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let input = corpus(dir.path(), 1);
    let out = dir.path().join("out");
    let res = cmisr(&["run", "--input", &input, "--sr", "plugin", "--plugin", "exit 3", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 4, "{}", String::from_utf8_lossy(&res.stderr));
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(report.contains("error:"));
}
