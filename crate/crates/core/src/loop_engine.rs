//! The closed-loop iteration.
//!
//! With `x_s0 = SR(x_lq)` the open-loop output, the loop integrates
//! `dx/dt = λ·(x_s0 − NF(x))` with explicit Euler steps:
//!
//! ```text
//! x_e(k)   = x_s0 − SR(UR(x(k)))        error term
//! x(k + 1) = x(k) + Δt·λ·x_e(k)         multiplier + integrator
//! ```
//!
//! The fixed points are exactly the images whose re-degraded,
//! re-super-resolved version equals the open-loop output.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{axpy, norm2, ImageTensor};
use crate::linearization::{contraction_factors, estimate_mu_with, lambda_bounds, ContractionFactors, MuEstimate, MuOptions};
use crate::metrics::{psnr, recovery_error};
use crate::nf::{run_open_loop, NfSystem};

pub const DEFAULT_MAX_ITERS: usize = 200;
pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_DT: f64 = 1.0;

/// Consecutive growing steps required before declaring divergence.
pub const DIVERGENCE_RUN: usize = 10;
/// ...and how far above its minimum the residual must be by then.
pub const DIVERGENCE_RATIO: f64 = 10.0;

pub const TRACE_CSV_HEADER: &str =
    "k,residual_l2,rms_residual,spectral_factor,frobenius_factor,recovery_error_l2,psnr_vs_gt,wall_ms";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    /// `λ = 1 / (Δt·μ_gain)`, the center of the admissible interval.
    AutoMidpoint,
    Fixed(f64),
}

impl FromStr for LambdaMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(LambdaMode::AutoMidpoint);
        }
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(LambdaMode::Fixed)
            .ok_or_else(|| Error::Validation(format!("lambda must be 'auto' or a number, got {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    Zero,
    /// Uniform `[0, 1)` noise from the given seed.
    Random(u64),
    /// Start from the open-loop output.
    SrOutput,
}

/// Which dimension the trace of the Jacobian is averaged over when turning
/// the μ estimate into a loop gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuNormalization {
    /// `tr(J)/d`: the mean eigenvalue over the range of `NF`, which has
    /// dimension at most `d = D/s²` because every image passes through the
    /// low-resolution space.
    #[default]
    Range,
    /// `tr(J)/D`: the mean diagonal entry. Counts the `D − d` null directions,
    /// so for `s > 1` the resulting gain is roughly `s²` times too large.
    Full,
}

impl FromStr for MuNormalization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "range" => Ok(MuNormalization::Range),
            "full" => Ok(MuNormalization::Full),
            _ => Err(Error::Validation(format!("unknown mu normalization {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub lambda_mode: LambdaMode,
    pub dt: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub init_mode: InitMode,
    /// Re-estimate μ every this many iterations; 0 never.
    pub mu_refresh: usize,
    pub mu_normalization: MuNormalization,
    #[serde(skip)]
    pub mu: MuOptions,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            lambda_mode: LambdaMode::AutoMidpoint,
            dt: DEFAULT_DT,
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
            init_mode: InitMode::SrOutput,
            mu_refresh: 0,
            mu_normalization: MuNormalization::Range,
            mu: MuOptions::default(),
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Validation(format!("dt must be positive, got {}", self.dt)));
        }
        if self.max_iters == 0 {
            return Err(Error::Validation("max_iters must be at least 1".into()));
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return Err(Error::Validation(format!("tol must be nonnegative, got {}", self.tol)));
        }
        if let LambdaMode::Fixed(v) = self.lambda_mode {
            if !v.is_finite() {
                return Err(Error::Validation("fixed lambda must be finite".into()));
            }
        }
        Ok(())
    }
}

/// Whether the loop is scored against a known ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// The input is the ground-truth image `x0`; `x_lq = UR(x0)`.
    Evaluation,
    /// The input is the low-quality observation itself.
    Deployment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub residual_l2: f64,
    pub rms_residual: f64,
    pub spectral_factor: f64,
    pub frobenius_factor: f64,
    pub recovery_error_l2: Option<f64>,
    pub psnr_vs_gt: Option<f64>,
    pub wall_ms: f64,
    /// `residual(k) / residual(k − 1)`; compare against `spectral_factor` to
    /// see how far the linearized model is from the actual decay.
    pub measured_ratio: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoopTrace {
    pub records: Vec<IterationRecord>,
}

impl LoopTrace {
    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    pub fn residuals(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.residual_l2)
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "{TRACE_CSV_HEADER}")?;
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{:.3}",
                r.k,
                r.residual_l2,
                r.rms_residual,
                r.spectral_factor,
                r.frobenius_factor,
                opt(r.recovery_error_l2),
                opt(r.psnr_vs_gt),
                r.wall_ms
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    /// Largest excess of the measured per-step residual ratio over the
    /// predicted spectral factor. This is the observable footprint of the
    /// discarded higher-order and off-diagonal Jacobian terms.
    pub fn linearization_gap(&self) -> Option<f64> {
        self.records
            .iter()
            .filter_map(|r| r.measured_ratio.map(|m| m - r.spectral_factor))
            .fold(None, |acc, g| Some(acc.map_or(g, |a: f64| a.max(g))))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TolReached,
    MaxIters,
    Diverged,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::TolReached => "tol_reached",
            StopReason::MaxIters => "max_iters",
            StopReason::Diverged => "diverged",
        })
    }
}

#[derive(Debug, Clone)]
pub struct LoopResult {
    pub x_final: ImageTensor,
    /// The open-loop output `x_s0`.
    pub x_open: ImageTensor,
    pub trace: LoopTrace,
    pub stop_reason: StopReason,
    pub mu_used: MuEstimate,
    /// The μ the gain was derived from, after normalization.
    pub gain_mu: f64,
    pub lambda_used: f64,
    /// Number of updates applied.
    pub iterations: usize,
}

/// One Euler step. Returns `(x_next, x_e)`.
pub fn step(
    x_k: &ImageTensor,
    x_s0: &ImageTensor,
    lambda: f64,
    dt: f64,
    sys: &NfSystem,
) -> Result<(ImageTensor, ImageTensor)> {
    x_k.check_same_shape(x_s0, "loop state vs open-loop output")?;
    if dt.is_nan() || dt <= 0.0 {
        return Err(Error::Validation(format!("dt must be positive, got {dt}")));
    }
    let x_e = x_s0.sub(&sys.apply(x_k)?)?;
    let x_next = axpy(dt * lambda, &x_e, x_k)?;
    if !x_next.is_finite() {
        return Err(Error::Divergence("state became non-finite".into()));
    }
    Ok((x_next, x_e))
}

fn gain_mu(est: &MuEstimate, norm: MuNormalization) -> f64 {
    match norm {
        MuNormalization::Range => est.range_mu(),
        MuNormalization::Full => est.mu,
    }
}

fn resolve_lambda(mode: LambdaMode, mu: f64, dt: f64, dim: usize) -> Result<f64> {
    match mode {
        LambdaMode::AutoMidpoint => Ok(lambda_bounds(mu, dt, dim)?.midpoint()),
        LambdaMode::Fixed(v) => Ok(v),
    }
}

/// Runs the closed loop to tolerance, iteration budget or divergence.
///
/// In [`RunMode::Evaluation`] `x_input` is the ground truth and every
/// iteration also records the recovery error and PSNR against it.
pub fn run_circular(sys: &NfSystem, x_input: &ImageTensor, mode: RunMode, cfg: &LoopConfig) -> Result<LoopResult> {
    cfg.validate()?;
    let (x_lq, ground_truth) = match mode {
        RunMode::Evaluation => (sys.ur().apply(x_input)?, Some(x_input)),
        RunMode::Deployment => (x_input.clone(), None),
    };
    let x_s0 = run_open_loop(sys, &x_lq)?;
    let (h, w, c) = x_s0.dims();
    let dim = x_s0.len();
    let sqrt_dim = (dim as f64).sqrt();

    let mut x = match cfg.init_mode {
        InitMode::SrOutput => x_s0.clone(),
        InitMode::Zero => ImageTensor::zeros(h, w, c)?,
        InitMode::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            ImageTensor::new(h, w, c, (0..dim).map(|_| rng.gen::<f64>()).collect())?
        }
    };

    let mut mu_est = estimate_mu_with(sys, &x, &cfg.mu)?;
    let mut mu = gain_mu(&mu_est, cfg.mu_normalization);
    let mut lambda = resolve_lambda(cfg.lambda_mode, mu, cfg.dt, dim)?;
    let mut factors = contraction_factors(lambda, mu, cfg.dt, dim);
    warn_if_expanding(&factors, lambda);

    let mut trace = LoopTrace::default();
    let mut min_res = f64::INFINITY;
    let mut prev_res: Option<f64> = None;
    let mut growth_run = 0usize;
    let mut k = 0usize;

    let stop_reason = loop {
        let started = Instant::now();
        if cfg.mu_refresh > 0 && k > 0 && k % cfg.mu_refresh == 0 {
            mu_est = estimate_mu_with(sys, &x, &cfg.mu)?;
            mu = gain_mu(&mu_est, cfg.mu_normalization);
            lambda = resolve_lambda(cfg.lambda_mode, mu, cfg.dt, dim)?;
            factors = contraction_factors(lambda, mu, cfg.dt, dim);
        }
        let x_e = x_s0.sub(&sys.apply(&x)?)?;
        let residual = norm2(&x_e);
        let (rec, gt_psnr) = match ground_truth {
            Some(x0) => (
                Some(recovery_error(&x, x0)?),
                Some(psnr(&x.clamp01(), &x0.clamp01(), 1.0)?),
            ),
            None => (None, None),
        };
        trace.records.push(IterationRecord {
            k,
            residual_l2: residual,
            rms_residual: residual / sqrt_dim,
            spectral_factor: factors.spectral,
            frobenius_factor: factors.frobenius,
            recovery_error_l2: rec,
            psnr_vs_gt: gt_psnr,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
            measured_ratio: prev_res.filter(|&p| p > 0.0).map(|p| residual / p),
        });

        if !residual.is_finite() {
            break StopReason::Diverged;
        }
        if residual / sqrt_dim <= cfg.tol {
            break StopReason::TolReached;
        }
        if let Some(p) = prev_res {
            growth_run = if residual > p { growth_run + 1 } else { 0 };
        }
        min_res = min_res.min(residual);
        if growth_run >= DIVERGENCE_RUN && residual > DIVERGENCE_RATIO * min_res {
            break StopReason::Diverged;
        }
        if k == cfg.max_iters {
            break StopReason::MaxIters;
        }
        let next = axpy(cfg.dt * lambda, &x_e, &x)?;
        if !next.is_finite() {
            break StopReason::Diverged;
        }
        x = next;
        prev_res = Some(residual);
        k += 1;
    };

    log::debug!(
        "closed loop stopped after {k} updates: {stop_reason}, residual {:e}",
        trace.last().map_or(f64::NAN, |r| r.rms_residual)
    );
    Ok(LoopResult {
        x_final: x,
        x_open: x_s0,
        trace,
        stop_reason,
        mu_used: mu_est,
        gain_mu: mu,
        lambda_used: lambda,
        iterations: k,
    })
}

fn warn_if_expanding(f: &ContractionFactors, lambda: f64) {
    if f.spectral >= 1.0 {
        log::warn!(
            "lambda = {lambda} gives spectral factor {} >= 1; the linearized loop does not contract",
            f.spectral
        );
    }
}
