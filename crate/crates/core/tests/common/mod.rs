//! Independent reference implementations for the integration suites.
//!
//! Nothing here calls into the resampling code under test: operator matrices
//! are written down from the interpolation formulas directly.

#![allow(dead_code)]

use cmisr::{ImageTensor, NfSystem, ResampleMethod, ScaleFactor, SrOperator, UrOperator};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Source coordinate of output sample `i` on a pixel-center grid.
fn source_coord(i: usize, n_in: usize, n_out: usize) -> f64 {
    (i as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5
}

fn clamp_index(i: i64, n: usize) -> usize {
    i.clamp(0, n as i64 - 1) as usize
}

pub fn keys(x: f64) -> f64 {
    let a = -0.5;
    let x = x.abs();
    if x < 1.0 {
        (a + 2.0) * x.powi(3) - (a + 3.0) * x.powi(2) + 1.0
    } else if x < 2.0 {
        a * x.powi(3) - 5.0 * a * x.powi(2) + 8.0 * a * x - 4.0 * a
    } else {
        0.0
    }
}

/// `n_out × n_in` matrix of one-dimensional resampling.
pub fn axis_matrix(n_in: usize, n_out: usize, method: ResampleMethod) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n_out, n_in);
    for i in 0..n_out {
        match method {
            ResampleMethod::Area => {
                let s = n_in / n_out;
                for j in i * s..(i + 1) * s {
                    m[(i, j)] += 1.0 / s as f64;
                }
            }
            ResampleMethod::Nearest => {
                let j = ((2 * i + 1) * n_in) / (2 * n_out);
                m[(i, j)] = 1.0;
            }
            ResampleMethod::Bilinear => {
                let c = source_coord(i, n_in, n_out);
                let f = c.floor();
                let t = c - f;
                m[(i, clamp_index(f as i64, n_in))] += 1.0 - t;
                m[(i, clamp_index(f as i64 + 1, n_in))] += t;
            }
            ResampleMethod::Bicubic => {
                let c = source_coord(i, n_in, n_out);
                let f = c.floor() as i64;
                for j in f - 1..=f + 2 {
                    m[(i, clamp_index(j, n_in))] += keys(c - j as f64);
                }
            }
        }
    }
    m
}

/// Separable 2-D operator on a single-channel row-major image.
pub fn image_matrix(h_in: usize, w_in: usize, h_out: usize, w_out: usize, method: ResampleMethod) -> DMatrix<f64> {
    axis_matrix(h_in, h_out, method).kronecker(&axis_matrix(w_in, w_out, method))
}

pub fn to_vector(img: &ImageTensor) -> nalgebra::DVector<f64> {
    nalgebra::DVector::from_column_slice(img.data())
}

pub fn from_vector(v: &nalgebra::DVector<f64>, h: usize, w: usize) -> ImageTensor {
    ImageTensor::new(h, w, 1, v.iter().copied().collect()).unwrap()
}

pub fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> ImageTensor {
    ImageTensor::from_fn(h, w, 1, |_, _, _| rng.gen::<f64>()).unwrap()
}

/// A random linear closed-loop instance: area down, bilinear or bicubic up.
pub struct LinearInstance {
    pub sys: NfSystem,
    pub x0: ImageTensor,
    pub scale: usize,
    pub up: ResampleMethod,
    /// Dense `M_sr · M_ur`.
    pub a: DMatrix<f64>,
}

impl LinearInstance {
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = if rng.gen_bool(0.5) { 2 } else { 4 };
        let sizes: Vec<usize> = (8..=16).filter(|n| n % scale == 0).collect();
        let h = sizes[rng.gen_range(0..sizes.len())];
        let w = sizes[rng.gen_range(0..sizes.len())];
        let up = if rng.gen_bool(0.5) { ResampleMethod::Bilinear } else { ResampleMethod::Bicubic };
        let x0 = random_image(&mut rng, h, w);
        Self::new(x0, scale, up)
    }

    pub fn new(x0: ImageTensor, scale: usize, up: ResampleMethod) -> Self {
        let s = ScaleFactor::new(scale).unwrap();
        let sr = match up {
            ResampleMethod::Bilinear => SrOperator::bilinear(s),
            ResampleMethod::Bicubic => SrOperator::bicubic(s),
            ResampleMethod::Nearest => SrOperator::nearest(s),
            ResampleMethod::Area => panic!("area is not an upsampler"),
        };
        let sys = NfSystem::new(UrOperator::downsample(ResampleMethod::Area, s), sr).unwrap();
        let (h, w) = (x0.height(), x0.width());
        let (hl, wl) = (h / scale, w / scale);
        let m_ur = image_matrix(h, w, hl, wl, ResampleMethod::Area);
        let m_sr = image_matrix(hl, wl, h, w, up);
        LinearInstance {
            sys,
            x0,
            scale,
            up,
            a: m_sr * m_ur,
        }
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    /// `tr(M_sr · M_ur) / D`.
    pub fn dense_mu(&self) -> f64 {
        self.a.trace() / self.dim() as f64
    }

    /// The fixed point the loop reaches from `x_init` when its updates stay
    /// in `range(A)`: `x_init + A·(A²)⁺·(b − A·x_init)`.
    pub fn oracle_fixed_point(&self, x_init: &ImageTensor, b: &ImageTensor) -> ImageTensor {
        let x = to_vector(x_init);
        let r0 = to_vector(b) - &self.a * &x;
        let a2 = &self.a * &self.a;
        let pinv = a2.pseudo_inverse(1e-10).unwrap();
        from_vector(&(x + &self.a * (pinv * r0)), self.x0.height(), self.x0.width())
    }
}

/// Straightforward PSNR: mean of squared differences, no shortcuts.
pub fn psnr_oracle(a: &[f64], b: &[f64], peak: f64) -> f64 {
    let mut mse = 0.0;
    for i in 0..a.len() {
        mse += (a[i] - b[i]).powi(2) / a.len() as f64;
    }
    10.0 * (peak * peak).log10() - 10.0 * mse.log10()
}

/// SSIM with an explicit 2-D window, single channel, valid region.
pub fn ssim_oracle(a: &ImageTensor, b: &ImageTensor) -> f64 {
    let (h, w) = (a.height(), a.width());
    let mut g = [[0.0f64; 11]; 11];
    let mut total = 0.0;
    for (i, row) in g.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(di * di + dj * dj) / (2.0 * 1.5 * 1.5)).exp();
            total += *v;
        }
    }
    let (c1, c2) = (1e-4, 9e-4);
    let mut acc = 0.0;
    let mut n = 0;
    for y in 0..=h - 11 {
        for x in 0..=w - 11 {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (i, g_row) in g.iter().enumerate() {
                for (j, &g_ij) in g_row.iter().enumerate() {
                    let wt = g_ij / total;
                    let (p, q) = (a.get(y + i, x + j, 0), b.get(y + i, x + j, 0));
                    ma += wt * p;
                    mb += wt * q;
                    saa += wt * p * p;
                    sbb += wt * q * q;
                    sab += wt * p * q;
                }
            }
            let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
            acc += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            n += 1;
        }
    }
    acc / n as f64
}
