use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cmisr::corpus::write_corpus;
use cmisr::harness::{analysis_csv, analyze, run_dataset, ReportFormat, RunSpec, UrChoice};
use cmisr::linearization::MuOptions;
use cmisr::{
    gaussian_kernel, DegradationOrder, DegradationSpec, Error, ErrorKind, InitMode, Kernel, LambdaMode,
    LoopConfig, MuNormalization, Rect, ResampleMethod, RunMode, ScaleFactor, SrKind,
};

const EXIT_VALIDATION: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_PLUGIN: u8 = 4;

#[derive(Parser)]
#[command(name = "cmisr", version, about = "Closed-loop super-resolution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run open- and closed-loop SR over an image or a directory.
    Run(RunArgs),
    /// Estimate mu, the admissible lambda interval and contraction factors.
    Analyze(CommonArgs),
    /// Write a synthetic test corpus.
    GenCorpus(CorpusArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Eval,
    Deploy,
}

#[derive(Clone, Copy, ValueEnum)]
enum UrArg {
    Area,
    Nearest,
    Bilinear,
    Bicubic,
    Degrade,
}

#[derive(Clone, Copy, ValueEnum)]
enum SrArg {
    Nearest,
    Bilinear,
    Bicubic,
    Plugin,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Sr,
    Zero,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    None,
    Gaussian,
    Uniform,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderArg {
    BlurFirst,
    DownsampleFirst,
}

#[derive(Clone, Copy, ValueEnum)]
enum MuNormArg {
    Range,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportArg {
    Csv,
    Json,
}

#[derive(Args)]
struct CommonArgs {
    /// Image file or directory of PNG/PGM/PPM images.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "eval")]
    mode: ModeArg,
    /// One or more scale factors, e.g. `--scale 2,3,4`.
    #[arg(long, value_delimiter = ',', default_value = "2", value_parser = parse_scale)]
    scale: Vec<ScaleFactor>,
    #[arg(long, value_enum, default_value = "area")]
    ur: UrArg,
    /// Blur kernel for `--ur degrade`: a text file, or `gaussian:SIDE:SIGMA`.
    #[arg(long, default_value = "gaussian:5:1.0")]
    kernel: String,
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
    #[arg(long, value_enum, default_value = "gaussian")]
    noise_kind: NoiseArg,
    #[arg(long, value_enum, default_value = "blur-first")]
    order: OrderArg,
    #[arg(long, value_enum, default_value = "bicubic")]
    sr: SrArg,
    /// Shell command that starts an SR plugin (with `--sr plugin`).
    #[arg(long)]
    plugin: Option<String>,
    /// `auto` or a fixed gain.
    #[arg(long, default_value = "auto")]
    lambda: String,
    #[arg(long, default_value_t = cmisr::loop_engine::DEFAULT_DT)]
    dt: f64,
    #[arg(long, default_value_t = cmisr::loop_engine::DEFAULT_MAX_ITERS)]
    iters: usize,
    #[arg(long, default_value_t = cmisr::loop_engine::DEFAULT_TOL)]
    tol: f64,
    #[arg(long, value_enum, default_value = "sr")]
    init: InitArg,
    /// Seeds the noise, the mu probes and random initialization.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = cmisr::linearization::DEFAULT_PROBES)]
    probes: usize,
    /// Re-estimate mu every N iterations (0 = never).
    #[arg(long, default_value_t = 0)]
    mu_refresh: usize,
    #[arg(long, value_enum, default_value = "range")]
    mu_norm: MuNormArg,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Replicate grayscale inputs to three channels.
    #[arg(long)]
    replicate: bool,
    /// Output directory. `analyze` prints to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_enum, default_value = "csv")]
    report: ReportArg,
    /// Emit difference figures for the block `X,Y,W,H` (evaluation only).
    #[arg(long, value_parser = parse_rect)]
    diff_block: Option<Rect>,
    #[arg(long, default_value_t = 1.0)]
    diff_gain: f64,
    /// Only write the report.
    #[arg(long)]
    no_artifacts: bool,
}

#[derive(Args)]
struct CorpusArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 12)]
    count: usize,
    /// Height and width.
    #[arg(long, num_args = 2, value_names = ["H", "W"], default_values_t = [96, 96])]
    size: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_scale(s: &str) -> Result<ScaleFactor, String> {
    let v: usize = s.trim().parse().map_err(|_| format!("not an integer: {s:?}"))?;
    ScaleFactor::new(v).map_err(|e| e.to_string())
}

fn parse_rect(s: &str) -> Result<Rect, String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| format!("expected X,Y,W,H, got {s:?}"))?;
    match v[..] {
        [x, y, width, height] if width > 0 && height > 0 => Ok(Rect { x, y, width, height }),
        _ => Err(format!("expected X,Y,W,H with positive size, got {s:?}")),
    }
}

fn parse_kernel(s: &str) -> cmisr::Result<Kernel> {
    match s.strip_prefix("gaussian:") {
        Some(rest) => {
            let (side, sigma) = rest
                .split_once(':')
                .and_then(|(a, b)| Some((a.parse().ok()?, b.parse().ok()?)))
                .ok_or_else(|| Error::Validation(format!("expected gaussian:SIDE:SIGMA, got {s:?}")))?;
            gaussian_kernel(side, sigma)
        }
        None => Kernel::load(s),
    }
}

impl CommonArgs {
    fn spec(&self) -> cmisr::Result<RunSpec> {
        let mode = match self.mode {
            ModeArg::Eval => RunMode::Evaluation,
            ModeArg::Deploy => RunMode::Deployment,
        };
        let mut spec = RunSpec::new(&self.input, mode, self.scale.clone());
        spec.ur = match self.ur {
            UrArg::Area => UrChoice::Resample(ResampleMethod::Area),
            UrArg::Nearest => UrChoice::Resample(ResampleMethod::Nearest),
            UrArg::Bilinear => UrChoice::Resample(ResampleMethod::Bilinear),
            UrArg::Bicubic => UrChoice::Resample(ResampleMethod::Bicubic),
            UrArg::Degrade => UrChoice::Degrade(DegradationSpec {
                kernel: parse_kernel(&self.kernel)?,
                noise_kind: match self.noise_kind {
                    NoiseArg::None => cmisr::NoiseKind::None,
                    NoiseArg::Gaussian => cmisr::NoiseKind::Gaussian,
                    NoiseArg::Uniform => cmisr::NoiseKind::Uniform,
                },
                noise_sigma: self.noise_sigma,
                order: match self.order {
                    OrderArg::BlurFirst => DegradationOrder::BlurThenDownsample,
                    OrderArg::DownsampleFirst => DegradationOrder::DownsampleThenBlur,
                },
                seed: self.seed,
            }),
        };
        spec.sr = match self.sr {
            SrArg::Nearest => SrKind::NearestUp,
            SrArg::Bilinear => SrKind::BilinearUp,
            SrArg::Bicubic => SrKind::BicubicUp,
            SrArg::Plugin => SrKind::Plugin,
        };
        spec.plugin = self.plugin.clone();
        spec.loop_cfg = LoopConfig {
            lambda_mode: self.lambda.parse::<LambdaMode>()?,
            dt: self.dt,
            max_iters: self.iters,
            tol: self.tol,
            init_mode: match self.init {
                InitArg::Sr => InitMode::SrOutput,
                InitArg::Zero => InitMode::Zero,
                InitArg::Random => InitMode::Random(self.seed),
            },
            mu_refresh: self.mu_refresh,
            mu_normalization: match self.mu_norm {
                MuNormArg::Range => MuNormalization::Range,
                MuNormArg::Full => MuNormalization::Full,
            },
            mu: MuOptions {
                probes: self.probes,
                seed: self.seed,
                ..MuOptions::default()
            },
        };
        spec.jobs = self.jobs;
        spec.replicate = self.replicate;
        spec.out_dir = self.out.clone();
        Ok(spec)
    }
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Validation => EXIT_VALIDATION,
        ErrorKind::Io => EXIT_IO,
        ErrorKind::Plugin => EXIT_PLUGIN,
    }
}

fn run(args: RunArgs) -> cmisr::Result<u8> {
    let mut spec = args.common.spec()?;
    if spec.out_dir.is_none() {
        return Err(Error::Validation("run needs --out".into()));
    }
    spec.report = match args.report {
        ReportArg::Csv => ReportFormat::Csv,
        ReportArg::Json => ReportFormat::Json,
    };
    spec.diff_block = args.diff_block;
    spec.diff_gain = args.diff_gain;
    spec.save_artifacts = !args.no_artifacts;
    let report = run_dataset(&spec)?;
    let out = spec.out_dir.as_deref().expect("checked above");
    let failures: Vec<_> = report.failures().collect();
    println!(
        "{} rows, {} failed; report in {}",
        report.rows.len(),
        failures.len(),
        out.display()
    );
    for f in &failures {
        eprintln!("{} x{}: {}", f.image, f.scale, f.error.as_deref().unwrap_or(""));
    }
    Ok(failures
        .first()
        .and_then(|f| f.error_kind)
        .map_or(0, exit_code))
}

fn run_analyze(args: CommonArgs) -> cmisr::Result<u8> {
    let spec = args.spec()?;
    let rows = analyze(&spec)?;
    let csv = analysis_csv(&rows);
    match &spec.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
            let path = dir.join("analysis.csv");
            std::fs::write(&path, csv).map_err(|e| io_error(&path, e))?;
            println!("analysis in {}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(rows
        .iter()
        .find_map(|(_, _, r)| r.as_ref().err().map(|e| exit_code(e.kind())))
        .unwrap_or(0))
}

fn io_error(path: &std::path::Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn gen_corpus(args: CorpusArgs) -> cmisr::Result<u8> {
    let paths = write_corpus(&args.out, args.count, args.size[0], args.size[1], args.seed)?;
    println!("wrote {} images to {}", paths.len(), args.out.display());
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Analyze(a) => run_analyze(a),
        Command::GenCorpus(a) => gen_corpus(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
