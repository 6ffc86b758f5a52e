//! Batch runs over a directory of images, with CSV/JSON reports.
//!
//! Rows are produced in parallel but always emitted in `(image, scale)`
//! order, and nothing time-dependent is written to a report, so two runs with
//! the same [`RunSpec`] produce byte-identical report files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, ErrorKind, Result};
use crate::image::{load_image, save_image, ImageTensor, Rect};
use crate::linearization::{contraction_factors, estimate_mu_with, lambda_bounds, LambdaBounds};
use crate::loop_engine::{run_circular, InitMode, LambdaMode, LoopConfig, LoopResult, MuNormalization, RunMode};
use crate::metrics::{difference_block_scaled, mean_abs, MetricReport};
use crate::nf::NfSystem;
use crate::resample::{ResampleMethod, ScaleFactor};
use crate::sr::{SrKind, SrOperator};
use crate::ur::{DegradationSpec, UrOperator};

pub const REPORT_HEADER_EVAL: &str =
    "image,scale,psnr_open_db,psnr_circ_db,ssim_open,ssim_circ,iters,stop_reason,mu,lambda,residual_final";
pub const REPORT_HEADER_DEPLOY: &str = "image,scale,residual_initial,iters,stop_reason,mu,lambda,residual_final";
pub const ANALYSIS_HEADER: &str =
    "image,scale,mu,mu_stderr,mu_gain,lambda_lo,lambda_hi,lambda,spectral_factor,frobenius_factor";

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "pgm", "ppm", "pnm"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(Error::Validation(format!("unknown report format {s:?}"))),
        }
    }
}

/// How the under-resolution operator is built for each scale.
#[derive(Debug, Clone, PartialEq)]
pub enum UrChoice {
    Resample(ResampleMethod),
    Degrade(DegradationSpec),
}

impl UrChoice {
    pub fn build(&self, scale: ScaleFactor) -> UrOperator {
        match self {
            UrChoice::Resample(m) => UrOperator::downsample(*m, scale),
            UrChoice::Degrade(spec) => UrOperator::degrade(spec.clone(), scale),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunSpec {
    /// An image file or a directory of images.
    pub input: PathBuf,
    pub mode: RunMode,
    pub scales: Vec<ScaleFactor>,
    pub ur: UrChoice,
    pub sr: SrKind,
    /// Shell command for [`SrKind::Plugin`].
    pub plugin: Option<String>,
    pub loop_cfg: LoopConfig,
    /// Worker threads; 0 lets rayon decide.
    pub jobs: usize,
    pub out_dir: Option<PathBuf>,
    pub report: ReportFormat,
    /// Replicate grayscale inputs to three channels.
    pub replicate: bool,
    /// Write per-image trace CSVs and output images next to the report.
    pub save_artifacts: bool,
    /// Region for difference figures, in evaluation mode.
    pub diff_block: Option<Rect>,
    pub diff_gain: f64,
}

impl RunSpec {
    pub fn new(input: impl Into<PathBuf>, mode: RunMode, scales: Vec<ScaleFactor>) -> Self {
        RunSpec {
            input: input.into(),
            mode,
            scales,
            ur: UrChoice::Resample(ResampleMethod::Area),
            sr: SrKind::BicubicUp,
            plugin: None,
            loop_cfg: LoopConfig::default(),
            jobs: 0,
            out_dir: None,
            report: ReportFormat::Csv,
            replicate: false,
            save_artifacts: true,
            diff_block: None,
            diff_gain: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() {
            return Err(Error::Validation("at least one scale is required".into()));
        }
        self.loop_cfg.validate()?;
        if let UrChoice::Degrade(spec) = &self.ur {
            spec.validate()?;
        }
        if self.sr == SrKind::Custom {
            return Err(Error::Validation("custom SR operators cannot be used from a run spec".into()));
        }
        if self.diff_block.is_some() && self.mode == RunMode::Deployment {
            return Err(Error::Validation("difference figures need ground truth (evaluation mode)".into()));
        }
        if !(self.diff_gain >= 1.0 && self.diff_gain.is_finite()) {
            return Err(Error::Validation(format!("diff gain must be >= 1, got {}", self.diff_gain)));
        }
        SrOperator::new(self.sr, self.scales[0], self.plugin.clone())?;
        Ok(())
    }

    pub fn system(&self, scale: ScaleFactor) -> Result<NfSystem> {
        NfSystem::new(self.ur.build(scale), SrOperator::new(self.sr, scale, self.plugin.clone())?)
    }
}

/// Image files under `input`, sorted by file name. A single file is returned
/// as is.
pub fn list_inputs(input: &Path) -> Result<Vec<PathBuf>> {
    let meta = fs::metadata(input).map_err(|e| Error::io(input, e))?;
    if meta.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(input).map_err(|e| Error::io(input, e))? {
        let path = entry.map_err(|e| Error::io(input, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::Validation(format!("no images found in {}", input.display())));
    }
    Ok(files)
}

fn image_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn serialize_db<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) if x.is_infinite() => s.serialize_str(if *x > 0.0 { "inf" } else { "-inf" }),
        Some(x) => s.serialize_f64(*x),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub image: String,
    pub scale: usize,
    #[serde(serialize_with = "serialize_db")]
    pub psnr_open_db: Option<f64>,
    #[serde(serialize_with = "serialize_db")]
    pub psnr_circ_db: Option<f64>,
    pub ssim_open: Option<f64>,
    pub ssim_circ: Option<f64>,
    pub residual_initial: Option<f64>,
    pub iters: Option<usize>,
    pub stop_reason: Option<String>,
    pub mu: Option<f64>,
    pub lambda: Option<f64>,
    pub residual_final: Option<f64>,
    /// Set when this image failed; the other fields are then empty.
    pub error: Option<String>,
    #[serde(skip)]
    pub error_kind: Option<ErrorKind>,
}

impl ComparisonRow {
    fn failed(image: String, scale: usize, err: &Error) -> Self {
        ComparisonRow {
            image,
            scale,
            psnr_open_db: None,
            psnr_circ_db: None,
            ssim_open: None,
            ssim_circ: None,
            residual_initial: None,
            iters: None,
            stop_reason: None,
            mu: None,
            lambda: None,
            residual_final: None,
            error: Some(err.to_string()),
            error_kind: Some(err.kind()),
        }
    }

    /// PSNR gain of the closed loop over the open loop, in dB.
    pub fn psnr_gain_db(&self) -> Option<f64> {
        Some(self.psnr_circ_db? - self.psnr_open_db?)
    }
}

/// Column means over the successful rows of one scale, or of all scales when
/// `scale` is `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub scale: Option<usize>,
    pub count: usize,
    #[serde(serialize_with = "serialize_db")]
    pub psnr_open_db: Option<f64>,
    #[serde(serialize_with = "serialize_db")]
    pub psnr_circ_db: Option<f64>,
    pub ssim_open: Option<f64>,
    pub ssim_circ: Option<f64>,
    pub residual_initial: Option<f64>,
    pub iters: Option<f64>,
    pub mu: Option<f64>,
    pub lambda: Option<f64>,
    pub residual_final: Option<f64>,
}

fn mean_of(rows: &[&ComparisonRow], f: impl Fn(&ComparisonRow) -> Option<f64>) -> Option<f64> {
    let vals: Option<Vec<f64>> = rows.iter().map(|r| f(r)).collect();
    let vals = vals?;
    if vals.is_empty() {
        return None;
    }
    Some(vals.iter().sum::<f64>() / vals.len() as f64)
}

impl AggregateRow {
    fn over(scale: Option<usize>, rows: &[&ComparisonRow]) -> Self {
        AggregateRow {
            scale,
            count: rows.len(),
            psnr_open_db: mean_of(rows, |r| r.psnr_open_db),
            psnr_circ_db: mean_of(rows, |r| r.psnr_circ_db),
            ssim_open: mean_of(rows, |r| r.ssim_open),
            ssim_circ: mean_of(rows, |r| r.ssim_circ),
            residual_initial: mean_of(rows, |r| r.residual_initial),
            iters: mean_of(rows, |r| r.iters.map(|v| v as f64)),
            mu: mean_of(rows, |r| r.mu),
            lambda: mean_of(rows, |r| r.lambda),
            residual_final: mean_of(rows, |r| r.residual_final),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub mode: RunMode,
    pub rows: Vec<ComparisonRow>,
    pub aggregates: Vec<AggregateRow>,
}

impl Report {
    pub fn new(mode: RunMode, rows: Vec<ComparisonRow>) -> Self {
        let ok: Vec<&ComparisonRow> = rows.iter().filter(|r| r.error.is_none()).collect();
        let mut scales: Vec<usize> = ok.iter().map(|r| r.scale).collect();
        scales.sort_unstable();
        scales.dedup();
        let mut aggregates: Vec<AggregateRow> = scales
            .iter()
            .map(|&s| {
                let subset: Vec<&ComparisonRow> = ok.iter().copied().filter(|r| r.scale == s).collect();
                AggregateRow::over(Some(s), &subset)
            })
            .collect();
        if !ok.is_empty() {
            aggregates.push(AggregateRow::over(None, &ok));
        }
        Report { mode, rows, aggregates }
    }

    pub fn failures(&self) -> impl Iterator<Item = &ComparisonRow> {
        self.rows.iter().filter(|r| r.error.is_some())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let eval = self.mode == RunMode::Evaluation;
        out.push_str(if eval { REPORT_HEADER_EVAL } else { REPORT_HEADER_DEPLOY });
        out.push('\n');
        for r in &self.rows {
            let status = match (&r.error, &r.stop_reason) {
                (Some(e), _) => format!("error: {e}"),
                (None, Some(s)) => s.clone(),
                (None, None) => String::new(),
            };
            let mut fields = vec![csv_escape(&r.image), r.scale.to_string()];
            if eval {
                fields.extend([fmt_opt(r.psnr_open_db), fmt_opt(r.psnr_circ_db), fmt_opt(r.ssim_open), fmt_opt(r.ssim_circ)]);
            } else {
                fields.push(fmt_opt(r.residual_initial));
            }
            fields.extend([
                r.iters.map_or(String::new(), |v| v.to_string()),
                csv_escape(&status),
                fmt_opt(r.mu),
                fmt_opt(r.lambda),
                fmt_opt(r.residual_final),
            ]);
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        for a in &self.aggregates {
            let scale = a.scale.map_or_else(|| "all".to_string(), |s| s.to_string());
            let mut fields = vec!["mean".to_string(), scale];
            if eval {
                fields.extend([fmt_opt(a.psnr_open_db), fmt_opt(a.psnr_circ_db), fmt_opt(a.ssim_open), fmt_opt(a.ssim_circ)]);
            } else {
                fields.push(fmt_opt(a.residual_initial));
            }
            fields.extend([
                fmt_opt(a.iters),
                format!("n={}", a.count),
                fmt_opt(a.mu),
                fmt_opt(a.lambda),
                fmt_opt(a.residual_final),
            ]);
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Writes `report.csv` or `report.json` into `dir` and returns its path.
    pub fn save(&self, dir: &Path, format: ReportFormat) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let (name, body) = match format {
            ReportFormat::Csv => ("report.csv", self.to_csv()),
            ReportFormat::Json => ("report.json", self.to_json()),
        };
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

/// Formats a number for a report cell. Infinities are written `inf`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), fmt_f64)
}

fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

struct Task<'a> {
    path: &'a Path,
    name: String,
    scale: ScaleFactor,
}

fn tasks<'a>(files: &'a [PathBuf], scales: &[ScaleFactor]) -> Vec<Task<'a>> {
    files
        .iter()
        .flat_map(|p| {
            scales.iter().map(move |&scale| Task {
                path: p.as_path(),
                name: image_name(p),
                scale,
            })
        })
        .collect()
}

fn in_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Validation(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Loads the task's input, cropping ground truth so the scale divides it.
fn load_input(spec: &RunSpec, task: &Task) -> Result<ImageTensor> {
    let img = load_image(task.path, spec.replicate)?;
    if spec.mode == RunMode::Deployment {
        return Ok(img);
    }
    match img.center_crop_to_multiple(task.scale.get())? {
        Some(cropped) => {
            log::info!(
                "{}: cropped {}x{} to {}x{} for scale {}",
                task.name,
                img.height(),
                img.width(),
                cropped.height(),
                cropped.width(),
                task.scale
            );
            Ok(cropped)
        }
        None => Ok(img),
    }
}

fn run_task(spec: &RunSpec, task: &Task) -> Result<ComparisonRow> {
    let input = load_input(spec, task)?;
    let sys = spec.system(task.scale)?;
    let result = run_circular(&sys, &input, spec.mode, &spec.loop_cfg)?;
    let (open, circ) = match spec.mode {
        RunMode::Evaluation => (
            Some(MetricReport::evaluate(&result.x_open, &input)?),
            Some(MetricReport::evaluate(&result.x_final, &input)?),
        ),
        RunMode::Deployment => (None, None),
    };
    if let Some(dir) = &spec.out_dir {
        write_artifacts(spec, task, dir, &input, &result)?;
    }
    Ok(ComparisonRow {
        image: task.name.clone(),
        scale: task.scale.get(),
        psnr_open_db: open.map(|m| m.psnr_db),
        psnr_circ_db: circ.map(|m| m.psnr_db),
        ssim_open: open.and_then(|m| m.ssim),
        ssim_circ: circ.and_then(|m| m.ssim),
        residual_initial: result.trace.records.first().map(|r| r.rms_residual),
        iters: Some(result.iterations),
        stop_reason: Some(result.stop_reason.to_string()),
        mu: Some(result.mu_used.mu),
        lambda: Some(result.lambda_used),
        residual_final: result.trace.last().map(|r| r.rms_residual),
        error: None,
        error_kind: None,
    })
}

fn write_artifacts(spec: &RunSpec, task: &Task, dir: &Path, input: &ImageTensor, result: &LoopResult) -> Result<()> {
    let stem = format!("{}_x{}", task.name, task.scale);
    if spec.save_artifacts {
        let traces = dir.join("traces");
        fs::create_dir_all(&traces).map_err(|e| Error::io(&traces, e))?;
        result.trace.save_csv(traces.join(format!("{stem}.csv")))?;
        let images = dir.join("images");
        fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
        save_image(&result.x_open, images.join(format!("{stem}_open.png")))?;
        save_image(&result.x_final, images.join(format!("{stem}_circ.png")))?;
    }
    if let Some(block) = spec.diff_block {
        let figs = dir.join("figures").join(&stem);
        emit_difference_figures(input, &result.x_open, &result.x_final, block, spec.diff_gain, &figs)?;
    }
    Ok(())
}

/// Runs every `(image, scale)` pair and writes the report into
/// `spec.out_dir` when set. A failing image becomes an error row; only
/// problems with the spec itself or the input listing abort the run.
pub fn run_dataset(spec: &RunSpec) -> Result<Report> {
    spec.validate()?;
    let files = list_inputs(&spec.input)?;
    let tasks = tasks(&files, &spec.scales);
    let rows: Vec<ComparisonRow> = in_pool(spec.jobs, || {
        tasks
            .par_iter()
            .map(|t| {
                run_task(spec, t).unwrap_or_else(|e| {
                    log::error!("{} at x{}: {e}", t.name, t.scale);
                    ComparisonRow::failed(t.name.clone(), t.scale.get(), &e)
                })
            })
            .collect()
    })?;
    let report = Report::new(spec.mode, rows);
    if let Some(dir) = &spec.out_dir {
        report.save(dir, spec.report)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferenceManifest {
    pub block: Rect,
    pub gain: f64,
    /// Mean absolute error of the unscaled difference blocks.
    pub mae_open: f64,
    pub mae_circ: f64,
    pub files: Vec<String>,
}

/// Crops `block` out of the ground truth and both reconstructions and
/// writes the crops, the two scaled difference blocks and a
/// `manifest.json` into `outdir`.
pub fn emit_difference_figures(
    x0: &ImageTensor,
    x_open: &ImageTensor,
    x_circ: &ImageTensor,
    block: Rect,
    gain: f64,
    outdir: &Path,
) -> Result<DifferenceManifest> {
    x0.check_same_shape(x_open, "difference figure")?;
    x0.check_same_shape(x_circ, "difference figure")?;
    let hq = x0.crop(block)?.clamp01();
    let open = x_open.crop(block)?.clamp01();
    let circ = x_circ.crop(block)?.clamp01();
    let open_diff = difference_block_scaled(&open, &hq, gain)?;
    let circ_diff = difference_block_scaled(&circ, &hq, gain)?;
    fs::create_dir_all(outdir).map_err(|e| Error::io(outdir, e))?;
    let outputs = [
        ("hq_block.png", &hq),
        ("open_block.png", &open),
        ("circ_block.png", &circ),
        ("open_diff.png", &open_diff),
        ("circ_diff.png", &circ_diff),
    ];
    for (name, img) in outputs {
        save_image(img, outdir.join(name))?;
    }
    let manifest = DifferenceManifest {
        block,
        gain,
        mae_open: mean_abs(&open.sub(&hq)?),
        mae_circ: mean_abs(&circ.sub(&hq)?),
        files: outputs.iter().map(|(n, _)| n.to_string()).collect(),
    };
    let path = outdir.join("manifest.json");
    let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, body + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisRow {
    pub image: String,
    pub scale: usize,
    pub mu: f64,
    pub mu_stderr: f64,
    pub mu_gain: f64,
    pub bounds: LambdaBounds,
    pub lambda: f64,
    pub spectral_factor: f64,
    pub frobenius_factor: f64,
}

fn analyze_task(spec: &RunSpec, task: &Task) -> Result<AnalysisRow> {
    let input = load_input(spec, task)?;
    let sys = spec.system(task.scale)?;
    let x_lq = match spec.mode {
        RunMode::Evaluation => sys.ur().apply(&input)?,
        RunMode::Deployment => input,
    };
    let x_s0 = sys.sr().apply(&x_lq)?;
    let x_ref = match spec.loop_cfg.init_mode {
        InitMode::SrOutput => x_s0,
        // The estimate only depends on where the Jacobian is taken; other
        // starts are analyzed at the zero image.
        _ => x_s0.scale(0.0),
    };
    let cfg = &spec.loop_cfg;
    let est = estimate_mu_with(&sys, &x_ref, &cfg.mu)?;
    let mu_gain = match cfg.mu_normalization {
        MuNormalization::Range => est.range_mu(),
        MuNormalization::Full => est.mu,
    };
    let dim = x_ref.len();
    let bounds = lambda_bounds(mu_gain, cfg.dt, dim)?;
    let lambda = match cfg.lambda_mode {
        LambdaMode::AutoMidpoint => bounds.midpoint(),
        LambdaMode::Fixed(v) => v,
    };
    let f = contraction_factors(lambda, mu_gain, cfg.dt, dim);
    Ok(AnalysisRow {
        image: task.name.clone(),
        scale: task.scale.get(),
        mu: est.mu,
        mu_stderr: est.stderr,
        mu_gain,
        bounds,
        lambda,
        spectral_factor: f.spectral,
        frobenius_factor: f.frobenius,
    })
}

/// Estimates μ, the admissible λ interval and the contraction factors for
/// every `(image, scale)` pair without running the loop. Failures are
/// returned in place.
pub fn analyze(spec: &RunSpec) -> Result<Vec<(String, usize, Result<AnalysisRow>)>> {
    spec.validate()?;
    let files = list_inputs(&spec.input)?;
    let tasks = tasks(&files, &spec.scales);
    in_pool(spec.jobs, || {
        tasks
            .par_iter()
            .map(|t| (t.name.clone(), t.scale.get(), analyze_task(spec, t)))
            .collect()
    })
}

pub fn analysis_csv(rows: &[(String, usize, Result<AnalysisRow>)]) -> String {
    let mut out = String::from(ANALYSIS_HEADER);
    out.push('\n');
    for (name, scale, row) in rows {
        match row {
            Ok(r) => {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{}",
                    csv_escape(name),
                    scale,
                    fmt_f64(r.mu),
                    fmt_f64(r.mu_stderr),
                    fmt_f64(r.mu_gain),
                    fmt_f64(r.bounds.lo),
                    fmt_f64(r.bounds.hi),
                    fmt_f64(r.lambda),
                    fmt_f64(r.spectral_factor),
                    fmt_f64(r.frobenius_factor)
                );
            }
            Err(e) => {
                let _ = writeln!(out, "{},{},{},,,,,,,", csv_escape(name), scale, csv_escape(&format!("error: {e}")));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(image: &str, scale: usize, open: f64, circ: f64) -> ComparisonRow {
        ComparisonRow {
            image: image.into(),
            scale,
            psnr_open_db: Some(open),
            psnr_circ_db: Some(circ),
            ssim_open: Some(0.5),
            ssim_circ: Some(0.6),
            residual_initial: Some(0.1),
            iters: Some(3),
            stop_reason: Some("tol_reached".into()),
            mu: Some(0.2),
            lambda: Some(1.5),
            residual_final: Some(1e-7),
            error: None,
            error_kind: None,
        }
    }

    #[test]
    fn aggregates_skip_failures() {
        let rows = vec![
            row("a", 2, 30.0, 31.0),
            row("b", 2, 20.0, 22.0),
            ComparisonRow::failed("c".into(), 2, &Error::Validation("bad".into())),
        ];
        let report = Report::new(RunMode::Evaluation, rows);
        assert_eq!(report.aggregates.len(), 2);
        assert_eq!(report.aggregates[0].count, 2);
        assert_eq!(report.aggregates[0].psnr_circ_db, Some(26.5));
        let csv = report.to_csv();
        assert!(csv.starts_with(REPORT_HEADER_EVAL));
        assert!(csv.contains("c,2,,,,,,error: invalid argument: bad,,,"));
        assert!(csv.contains("mean,all,25,26.5"));
    }

    #[test]
    fn infinite_psnr_is_written_inf() {
        let report = Report::new(RunMode::Evaluation, vec![row("a", 1, f64::INFINITY, f64::INFINITY)]);
        assert!(report.to_csv().contains("a,1,inf,inf,"));
        assert!(report.to_json().contains("\"psnr_open_db\": \"inf\""));
    }

    #[test]
    fn deploy_header_has_no_quality_columns() {
        let mut r = row("a", 2, 0.0, 0.0);
        r.psnr_open_db = None;
        r.psnr_circ_db = None;
        let csv = Report::new(RunMode::Deployment, vec![r]).to_csv();
        assert!(csv.starts_with(REPORT_HEADER_DEPLOY));
        assert!(!csv.contains("psnr"));
    }

    #[test]
    fn csv_escaping() {
        assert_eq!(csv_escape("plain"), "plain");
        assert_eq!(csv_escape("a,b"), "\"a,b\"");
        assert_eq!(csv_escape("say \"hi\""), "\"say \"\"hi\"\"\"");
    }
}
