//! PSNR, SSIM, recovery error and difference blocks.
//!
//! SSIM uses the customary constants: an 11×11 Gaussian window with
//! σ = 1.5, `C1 = (0.01·L)²`, `C2 = (0.03·L)²` with `L = 1`, evaluated on the
//! valid region only (no padding) and averaged over positions and channels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{axpy, norm2, ImageTensor};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// PSNR of identical images. Written as `inf` in reports.
pub const PSNR_IDENTICAL: f64 = f64::INFINITY;

/// `10·log10(peak² / MSE)` over every sample.
pub fn psnr(a: &ImageTensor, b: &ImageTensor, peak: f64) -> Result<f64> {
    a.check_same_shape(b, "psnr")?;
    if peak.is_nan() || peak <= 0.0 {
        return Err(Error::Validation(format!("peak must be positive, got {peak}")));
    }
    let sse: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    if sse == 0.0 {
        return Ok(PSNR_IDENTICAL);
    }
    let mse = sse / a.len() as f64;
    Ok(10.0 * (peak * peak / mse).log10())
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut w = [0.0; SSIM_WINDOW];
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-(d * d) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = w.iter().sum();
    w.map(|v| v / sum)
}

/// Valid-mode separable filtering of an `h × w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, win: &[f64]) -> Vec<f64> {
    let k = win.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut horiz = vec![0.0; h * ow];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            horiz[y * ow + x] = win.iter().zip(&row[x..x + k]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for (i, wt) in win.iter().enumerate() {
            let src = &horiz[(y + i) * ow..(y + i + 1) * ow];
            for (o, v) in out[y * ow..(y + 1) * ow].iter_mut().zip(src) {
                *o += wt * v;
            }
        }
    }
    out
}

/// Mean structural similarity. Requires both sides to be at least 11 pixels.
pub fn ssim(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    a.check_same_shape(b, "ssim")?;
    let (h, w, channels) = a.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Validation(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}"
        )));
    }
    let c1 = (SSIM_K1 * 1.0f64).powi(2);
    let c2 = (SSIM_K2 * 1.0f64).powi(2);
    let win = gaussian_window();
    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..channels {
        let pa = a.channel(ch).into_data();
        let pb = b.channel(ch).into_data();
        let aa: Vec<f64> = pa.iter().map(|v| v * v).collect();
        let bb: Vec<f64> = pb.iter().map(|v| v * v).collect();
        let ab: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x * y).collect();
        let mu_a = filter_valid(&pa, h, w, &win);
        let mu_b = filter_valid(&pb, h, w, &win);
        let e_aa = filter_valid(&aa, h, w, &win);
        let e_bb = filter_valid(&bb, h, w, &win);
        let e_ab = filter_valid(&ab, h, w, &win);
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let var_a = e_aa[i] - ma * ma;
            let var_b = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
            let den = (ma * ma + mb * mb + c1) * (var_a + var_b + c2);
            total += num / den;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// `|sr − hq|` elementwise.
pub fn difference_block(sr_block: &ImageTensor, hq_block: &ImageTensor) -> Result<ImageTensor> {
    Ok(axpy(-1.0, hq_block, sr_block)?.map(f64::abs))
}

/// Difference block multiplied by a visualization gain `g ≥ 1` and clamped
/// to `[0, 1]`, ready to be saved.
pub fn difference_block_scaled(sr_block: &ImageTensor, hq_block: &ImageTensor, gain: f64) -> Result<ImageTensor> {
    if !(gain >= 1.0 && gain.is_finite()) {
        return Err(Error::Validation(format!("visualization gain must be >= 1, got {gain}")));
    }
    Ok(difference_block(sr_block, hq_block)?.map(|v| (gain * v).min(1.0)))
}

/// `‖x − x0‖₂`.
pub fn recovery_error(x: &ImageTensor, x0: &ImageTensor) -> Result<f64> {
    Ok(norm2(&axpy(-1.0, x0, x)?))
}

pub fn mean_abs(img: &ImageTensor) -> f64 {
    img.data().iter().map(|v| v.abs()).sum::<f64>() / img.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub psnr_db: f64,
    /// `None` when the image is smaller than the SSIM window.
    pub ssim: Option<f64>,
    pub recovery_error_l2: f64,
}

impl MetricReport {
    /// Scores `x` against ground truth `x0` after clamping both to `[0, 1]`.
    pub fn evaluate(x: &ImageTensor, x0: &ImageTensor) -> Result<Self> {
        let (xc, gc) = (x.clamp01(), x0.clamp01());
        let ssim = match ssim(&xc, &gc) {
            Ok(v) => Some(v),
            Err(Error::Validation(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(MetricReport {
            psnr_db: psnr(&xc, &gc, 1.0)?,
            ssim,
            recovery_error_l2: recovery_error(x, x0)?,
        })
    }
}
