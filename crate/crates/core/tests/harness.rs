mod common;

use std::fs;

use cmisr::harness::{
    analyze, emit_difference_figures, run_dataset, DifferenceManifest, ReportFormat, RunSpec, REPORT_HEADER_DEPLOY,
    REPORT_HEADER_EVAL,
};
use cmisr::{difference_block, load_image, save_image, ImageTensor, Rect, RunMode, ScaleFactor, SrKind};
use common::random_image;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn spec(input: &std::path::Path, mode: RunMode, scales: &[usize]) -> RunSpec {
    RunSpec::new(
        input,
        mode,
        scales.iter().map(|&s| ScaleFactor::new(s).unwrap()).collect(),
    )
}

#[test]
fn constant_images_are_fixed_points() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a", "b", "c"] {
        save_image(&ImageTensor::filled(12, 12, 1, 0.6).unwrap(), dir.path().join(format!("{name}.png"))).unwrap();
    }
    for sr in [SrKind::NearestUp, SrKind::BilinearUp, SrKind::BicubicUp] {
        let mut s = spec(dir.path(), RunMode::Evaluation, &[2, 3, 4]);
        s.sr = sr;
        let report = run_dataset(&s).unwrap();
        assert_eq!(report.rows.len(), 9);
        for r in &report.rows {
            assert_eq!(r.psnr_open_db, Some(f64::INFINITY));
            assert_eq!(r.psnr_circ_db, Some(f64::INFINITY));
        }
        let csv = report.to_csv();
        assert!(csv.lines().skip(1).take(9).all(|l| l.contains(",inf,inf,")));
        let by_image = |name: &str| -> Vec<String> {
            csv.lines()
                .filter(|l| l.starts_with(&format!("{name},")))
                .map(|l| l.split_once(',').unwrap().1.to_string())
                .collect()
        };
        assert_eq!(by_image("a"), by_image("b"));
        assert_eq!(by_image("b"), by_image("c"));
    }
}

#[test]
fn gradient_image_records_both_pipelines() {
    let dir = tempfile::tempdir().unwrap();
    let x0 = ImageTensor::from_fn(16, 16, 1, |y, x, _| (x as f64 * 3.0 + y as f64) / 64.0 + 0.1).unwrap();
    save_image(&x0, dir.path().join("gradient.png")).unwrap();
    let mut s = spec(&dir.path().join("gradient.png"), RunMode::Evaluation, &[2]);
    s.sr = SrKind::BilinearUp;
    s.out_dir = Some(dir.path().join("out"));
    let report = run_dataset(&s).unwrap();
    let row = &report.rows[0];
    let (open, circ) = (row.psnr_open_db.unwrap(), row.psnr_circ_db.unwrap());
    assert!(open.is_finite() && circ.is_finite());
    assert!(circ >= open, "open {open} circ {circ}");
    assert_eq!(row.stop_reason.as_deref(), Some("tol_reached"));

    let out = dir.path().join("out");
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.starts_with(REPORT_HEADER_EVAL));
    let trace = fs::read_to_string(out.join("traces/gradient_x2.csv")).unwrap();
    assert_eq!(trace.lines().count(), row.iters.unwrap() + 2);
    assert!(out.join("images/gradient_x2_open.png").exists());
    assert!(out.join("images/gradient_x2_circ.png").exists());
}

#[test]
fn deployment_reports_residuals_only() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    save_image(&random_image(&mut rng, 7, 9), dir.path().join("lq.png")).unwrap();
    let mut s = spec(dir.path(), RunMode::Deployment, &[2]);
    s.out_dir = Some(dir.path().join("out"));
    s.report = ReportFormat::Json;
    let report = run_dataset(&s).unwrap();
    let row = &report.rows[0];
    assert!(row.psnr_open_db.is_none() && row.ssim_circ.is_none());
    assert!(row.residual_initial.unwrap() > row.residual_final.unwrap());
    let csv = report.to_csv();
    assert!(csv.starts_with(REPORT_HEADER_DEPLOY));
    assert!(!csv.contains("psnr"));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(json["mode"], "deployment");
    assert!(json["rows"][0]["residual_final"].is_number());
}

#[test]
fn aggregates_are_arithmetic_means() {
    let dir = tempfile::tempdir().unwrap();
    cmisr::corpus::write_corpus(dir.path(), 5, 24, 24, 3).unwrap();
    let report = run_dataset(&spec(dir.path(), RunMode::Evaluation, &[2, 4])).unwrap();
    for agg in &report.aggregates {
        let rows: Vec<_> = report
            .rows
            .iter()
            .filter(|r| agg.scale.map_or(true, |s| r.scale == s))
            .collect();
        assert_eq!(agg.count, rows.len());
        let mean = |f: &dyn Fn(&cmisr::ComparisonRow) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / rows.len() as f64;
        let close = |a: Option<f64>, b: f64| (a.unwrap() - b).abs() <= 1e-12 * b.abs().max(1.0);
        assert!(close(agg.psnr_circ_db, mean(&|r| r.psnr_circ_db.unwrap())));
        assert!(close(agg.psnr_open_db, mean(&|r| r.psnr_open_db.unwrap())));
        assert!(close(agg.ssim_circ, mean(&|r| r.ssim_circ.unwrap())));
        assert!(close(agg.iters, mean(&|r| r.iters.unwrap() as f64)));
        assert!(close(agg.residual_final, mean(&|r| r.residual_final.unwrap())));
    }
    assert_eq!(report.aggregates.len(), 3);
}

#[test]
fn failures_are_recorded_per_row() {
    let dir = tempfile::tempdir().unwrap();
    save_image(&ImageTensor::filled(8, 8, 1, 0.2).unwrap(), dir.path().join("good.png")).unwrap();
    fs::write(dir.path().join("broken.png"), b"\x89PNG\r\n\x1a\nnot really").unwrap();
    save_image(&ImageTensor::filled(2, 2, 1, 0.2).unwrap(), dir.path().join("tiny.png")).unwrap();
    let report = run_dataset(&spec(dir.path(), RunMode::Evaluation, &[4])).unwrap();
    let names: Vec<_> = report.rows.iter().map(|r| r.image.as_str()).collect();
    assert_eq!(names, ["broken", "good", "tiny"]);
    assert!(report.rows[0].error_kind.is_some_and(|k| k == cmisr::ErrorKind::Io));
    assert!(report.rows[1].error.is_none());
    assert!(report.rows[2].error_kind.is_some_and(|k| k == cmisr::ErrorKind::Validation));
    assert_eq!(report.aggregates.last().unwrap().count, 1);
}

#[test]
fn empty_and_missing_inputs() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("notes.txt"), "no images here").unwrap();
    let err = run_dataset(&spec(dir.path(), RunMode::Evaluation, &[2])).unwrap_err();
    assert!(err.is_validation(), "{err}");
    let err = run_dataset(&spec(&dir.path().join("absent"), RunMode::Evaluation, &[2])).unwrap_err();
    assert!(err.is_io(), "{err}");
    let err = run_dataset(&spec(dir.path(), RunMode::Evaluation, &[])).unwrap_err();
    assert!(err.is_validation());
}

#[test]
fn non_divisible_inputs_are_center_cropped() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    save_image(&random_image(&mut rng, 15, 18), dir.path().join("odd.png")).unwrap();
    let mut s = spec(dir.path(), RunMode::Evaluation, &[4]);
    s.out_dir = Some(dir.path().join("out"));
    let report = run_dataset(&s).unwrap();
    assert!(report.rows[0].error.is_none());
    let circ = load_image(dir.path().join("out/images/odd_x4_circ.png"), false).unwrap();
    assert_eq!(circ.dims(), (12, 16, 1));
}

fn manifest(dir: &std::path::Path) -> DifferenceManifest {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn difference_figures_identical_inputs_are_zero() {
    let dir = tempfile::tempdir().unwrap();
    let x0 = random_image(&mut ChaCha8Rng::seed_from_u64(5), 10, 10);
    let block = Rect { x: 2, y: 3, width: 5, height: 4 };
    let m = emit_difference_figures(&x0, &x0, &x0, block, 4.0, dir.path()).unwrap();
    assert_eq!((m.mae_open, m.mae_circ), (0.0, 0.0));
    for name in ["open_diff.png", "circ_diff.png"] {
        let d = load_image(dir.path().join(name), false).unwrap();
        assert_eq!(d.dims(), (4, 5, 1));
        assert!(d.data().iter().all(|&v| v == 0.0));
    }
    assert_eq!(manifest(dir.path()), m);
}

#[test]
fn difference_figures_full_block_and_saved_mae() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x0 = random_image(&mut rng, 12, 9);
    let open = random_image(&mut rng, 12, 9);
    let circ = x0.map(|v| (v + 0.05).min(1.0));
    let full = Rect { x: 0, y: 0, width: 9, height: 12 };
    let m = emit_difference_figures(&x0, &open, &circ, full, 1.0, dir.path()).unwrap();

    let whole = difference_block(&open, &x0).unwrap();
    let mean_whole = whole.data().iter().sum::<f64>() / whole.len() as f64;
    assert!((m.mae_open - mean_whole).abs() < 1e-12);

    // Saved 8-bit data reproduces the manifest to quantization accuracy.
    for (name, mae) in [("open_diff.png", m.mae_open), ("circ_diff.png", m.mae_circ)] {
        let saved = load_image(dir.path().join(name), false).unwrap();
        let mean = saved.data().iter().sum::<f64>() / saved.len() as f64;
        assert!((mean - mae).abs() <= 0.5 / 255.0 + 1e-12, "{name}: {mean} vs {mae}");
    }
    let hq = load_image(dir.path().join("hq_block.png"), false).unwrap();
    assert_eq!(hq.dims(), (12, 9, 1));

    let out_of_bounds = Rect { x: 5, y: 0, width: 5, height: 2 };
    let err = emit_difference_figures(&x0, &open, &circ, out_of_bounds, 1.0, dir.path()).unwrap_err();
    assert!(err.is_validation(), "{err}");
}

#[test]
fn analyze_reports_bounds_without_running_the_loop() {
    let dir = tempfile::tempdir().unwrap();
    cmisr::corpus::write_corpus(dir.path(), 2, 16, 16, 0).unwrap();
    let rows = analyze(&spec(dir.path(), RunMode::Evaluation, &[2, 4])).unwrap();
    assert_eq!(rows.len(), 4);
    for (_, scale, row) in &rows {
        let r = row.as_ref().unwrap();
        assert!(r.bounds.contains(r.lambda));
        assert!((r.mu_gain - r.mu * (*scale * *scale) as f64).abs() < 1e-12);
        assert!(r.spectral_factor < 1e-12);
    }
    let csv = cmisr::harness::analysis_csv(&rows);
    assert!(csv.starts_with(cmisr::harness::ANALYSIS_HEADER));
    assert_eq!(csv.lines().count(), 5);
}
