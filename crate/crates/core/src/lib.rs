//! Closed-loop super-resolution.
//!
//! An open-loop pipeline degrades a high-quality image with an
//! under-resolution operator `UR` and restores it with a super-resolution
//! operator `SR`. This crate closes the loop: starting from the open-loop
//! output `x_s0`, it iterates
//!
//! ```text
//! x ← x + Δt·λ·(x_s0 − SR(UR(x)))
//! ```
//!
//! until the re-degraded, re-super-resolved estimate reproduces `x_s0`. Any
//! SR operator can be plugged in: the built-in interpolators, an in-process
//! closure, or an external process speaking the [`plugin`] protocol.
//!
//! ```
//! use cmisr::{
//!     run_circular, ImageTensor, LoopConfig, NfSystem, ResampleMethod, RunMode, ScaleFactor,
//!     SrOperator, StopReason, UrOperator,
//! };
//!
//! let s = ScaleFactor::X2;
//! let sys = NfSystem::new(
//!     UrOperator::downsample(ResampleMethod::Area, s),
//!     SrOperator::bicubic(s),
//! )?;
//! let x0 = ImageTensor::from_fn(16, 16, 1, |y, x, _| ((x + 2 * y) % 5) as f64 / 4.0)?;
//! let result = run_circular(&sys, &x0, RunMode::Evaluation, &LoopConfig::default())?;
//! assert_eq!(result.stop_reason, StopReason::TolReached);
//! # Ok::<(), cmisr::Error>(())
//! ```

pub mod corpus;
pub mod error;
pub mod harness;
pub mod image;
pub mod linalg;
pub mod linearization;
pub mod loop_engine;
pub mod metrics;
pub mod nf;
pub mod plugin;
pub mod resample;
pub mod sr;
pub mod ur;

pub use crate::error::{Error, ErrorKind, Result};
pub use crate::harness::{run_dataset, ComparisonRow, Report, RunSpec};
pub use crate::image::{axpy, load_image, norm2, save_image, ImageTensor, PixelEncoding, Rect};
pub use crate::linalg::DenseMatrix;
pub use crate::linearization::{
    contraction_factors, estimate_mu, estimate_mu_with, lambda_bounds, ContractionFactors, LambdaBounds,
    MuEstimate, MuOptions, ProbeSpace,
};
pub use crate::loop_engine::{
    run_circular, step, InitMode, IterationRecord, LambdaMode, LoopConfig, LoopResult, LoopTrace,
    MuNormalization, RunMode, StopReason,
};
pub use crate::metrics::{difference_block, psnr, recovery_error, ssim, MetricReport};
pub use crate::nf::{nf_apply, run_open_loop, NfSystem};
pub use crate::resample::{ResampleMethod, ScaleFactor};
pub use crate::sr::{sr_apply, sr_linear_matrix, SrKind, SrOperator};
pub use crate::ur::{
    degrade, downsample, gaussian_kernel, DegradationOrder, DegradationSpec, Kernel, NoiseKind, UrOperator,
};
