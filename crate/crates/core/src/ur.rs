//! Under-resolution operators: the map from a high-quality image to the
//! low-quality observation.
//!
//! Two families are provided. Classical UR is plain downsampling by an
//! integer factor. Blind UR convolves with a degradation kernel, downsamples
//! (in either order) and adds seeded noise.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::linalg::DenseMatrix;
use crate::resample::{self, ResampleMethod, ScaleFactor};

/// Reduces `img` by `s` on the pixel-center grid.
///
/// `Area` averages each `s × s` block exactly; the interpolating methods
/// point-sample the source at `((i + 0.5)·s − 0.5, (j + 0.5)·s − 0.5)`.
pub fn downsample(img: &ImageTensor, s: ScaleFactor, method: ResampleMethod) -> Result<ImageTensor> {
    let s = s.get();
    let (h, w, _) = img.dims();
    if h % s != 0 || w % s != 0 {
        return Err(Error::Shape(format!(
            "{h}x{w} image is not divisible by scale {s}"
        )));
    }
    if s == 1 {
        return Ok(img.clone());
    }
    resample::resize(img, h / s, w / s, method)
}

/// A normalized 2D degradation kernel with odd side lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Kernel {
    /// Checks odd sides, finite entries and unit sum (within `1e-12`).
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || rows % 2 == 0 || cols % 2 == 0 {
            return Err(Error::Validation(format!(
                "kernel sides must be odd, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::Validation(format!(
                "kernel has {} entries, expected {}",
                data.len(),
                rows * cols
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("kernel entries must be finite".into()));
        }
        let sum: f64 = data.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Validation(format!("kernel must sum to 1, sums to {sum}")));
        }
        Ok(Kernel { rows, cols, data })
    }

    pub fn identity() -> Self {
        Kernel {
            rows: 1,
            cols: 1,
            data: vec![1.0],
        }
    }

    /// Parses rows of whitespace-separated decimals. The entries are divided
    /// by their sum, so text files need not carry 17 significant digits.
    pub fn parse(text: &str) -> Result<Self> {
        let rows: Vec<Vec<f64>> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                l.split_whitespace()
                    .map(|tok| {
                        tok.parse::<f64>()
                            .map_err(|_| Error::Validation(format!("bad kernel entry {tok:?}")))
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Validation("kernel rows have different lengths".into()));
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        let sum: f64 = data.iter().sum();
        if !(sum.is_finite() && sum.abs() > 0.0) {
            return Err(Error::Validation(format!("kernel sum must be nonzero, got {sum}")));
        }
        Kernel::new(rows.len(), cols, data.iter().map(|v| v / sum).collect())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Kernel::parse(&text)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

/// Samples `exp(-(dx² + dy²) / 2σ²)` on a centered `side × side` grid and
/// normalizes it to unit sum.
pub fn gaussian_kernel(side: usize, sigma: f64) -> Result<Kernel> {
    if side % 2 == 0 {
        return Err(Error::Validation(format!("kernel side must be odd, got {side}")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Validation(format!("sigma must be positive, got {sigma}")));
    }
    let half = (side / 2) as f64;
    let denom = 2.0 * sigma * sigma;
    let raw: Vec<f64> = (0..side * side)
        .map(|i| {
            let dy = (i / side) as f64 - half;
            let dx = (i % side) as f64 - half;
            (-(dx * dx + dy * dy) / denom).exp()
        })
        .collect();
    let sum: f64 = raw.iter().sum();
    Kernel::new(side, side, raw.into_iter().map(|v| v / sum).collect())
}

/// 2D convolution with clamp-to-edge borders, per channel.
pub fn convolve(img: &ImageTensor, kernel: &Kernel) -> ImageTensor {
    if kernel.rows == 1 && kernel.cols == 1 {
        return img.scale(kernel.data[0]);
    }
    let (h, w, c) = img.dims();
    let (cy, cx) = ((kernel.rows / 2) as isize, (kernel.cols / 2) as isize);
    let src = img.data();
    // Accumulate offsets from the center pixel so constants come back bit-exact.
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            let o = (y * w + x) * c;
            for ky in 0..kernel.rows {
                let sy = (y as isize - (ky as isize - cy)).clamp(0, h as isize - 1) as usize;
                for kx in 0..kernel.cols {
                    let sx = (x as isize - (kx as isize - cx)).clamp(0, w as isize - 1) as usize;
                    let wt = kernel.get(ky, kx);
                    let s = (sy * w + sx) * c;
                    for ch in 0..c {
                        out[o + ch] += wt * (src[s + ch] - src[o + ch]);
                    }
                }
            }
            for ch in 0..c {
                out[o + ch] += src[o + ch];
            }
        }
    }
    ImageTensor::from_parts(h, w, c, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    None,
    Gaussian,
    /// Uniform on `[-σ√3, σ√3]`, i.e. variance σ².
    Uniform,
}

impl FromStr for NoiseKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(NoiseKind::None),
            "gaussian" => Ok(NoiseKind::Gaussian),
            "uniform" => Ok(NoiseKind::Uniform),
            _ => Err(Error::Validation(format!("unknown noise kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegradationOrder {
    /// `(x ⊗ k)↓s + n`
    #[default]
    BlurThenDownsample,
    /// `(x↓s) ⊗ k + n`
    DownsampleThenBlur,
}

/// Blind degradation: kernel, noise model, operator order and noise seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationSpec {
    pub kernel: Kernel,
    pub noise_kind: NoiseKind,
    pub noise_sigma: f64,
    pub order: DegradationOrder,
    pub seed: u64,
}

impl DegradationSpec {
    pub fn noiseless(kernel: Kernel, order: DegradationOrder) -> Self {
        DegradationSpec {
            kernel,
            noise_kind: NoiseKind::None,
            noise_sigma: 0.0,
            order,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Validation(format!(
                "noise sigma must be a nonnegative number, got {}",
                self.noise_sigma
            )));
        }
        // Re-run the kernel checks in case the spec was deserialized.
        Kernel::new(self.kernel.rows, self.kernel.cols, self.kernel.data.clone()).map(|_| ())
    }

    fn has_noise(&self) -> bool {
        self.noise_kind != NoiseKind::None && self.noise_sigma > 0.0
    }
}

/// Blur, downsample (area) and add noise, in the order given by `spec`.
pub fn degrade(img: &ImageTensor, spec: &DegradationSpec, s: ScaleFactor) -> Result<ImageTensor> {
    let clean = degrade_noiseless(img, spec, s)?;
    if !spec.has_noise() {
        return Ok(clean);
    }
    let noise = noise_field(clean.len(), spec);
    let data = clean.data().iter().zip(noise).map(|(v, n)| v + n).collect();
    let (h, w, c) = clean.dims();
    Ok(ImageTensor::from_parts(h, w, c, data))
}

/// The linear part of [`degrade`]: everything but the additive noise.
pub fn degrade_noiseless(img: &ImageTensor, spec: &DegradationSpec, s: ScaleFactor) -> Result<ImageTensor> {
    spec.validate()?;
    match spec.order {
        DegradationOrder::BlurThenDownsample => {
            downsample(&convolve(img, &spec.kernel), s, ResampleMethod::Area)
        }
        DegradationOrder::DownsampleThenBlur => {
            Ok(convolve(&downsample(img, s, ResampleMethod::Area)?, &spec.kernel))
        }
    }
}

fn noise_field(len: usize, spec: &DegradationSpec) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sigma = spec.noise_sigma;
    match spec.noise_kind {
        NoiseKind::None => vec![0.0; len],
        NoiseKind::Gaussian => {
            let dist = Normal::new(0.0, sigma).expect("sigma validated");
            (0..len).map(|_| dist.sample(&mut rng)).collect()
        }
        NoiseKind::Uniform => {
            let half = sigma * 3f64.sqrt();
            let dist = Uniform::new_inclusive(-half, half);
            (0..len).map(|_| dist.sample(&mut rng)).collect()
        }
    }
}

/// A fully configured UR unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UrOperator {
    Downsample { method: ResampleMethod, scale: ScaleFactor },
    Degrade { spec: DegradationSpec, scale: ScaleFactor },
}

impl UrOperator {
    pub fn downsample(method: ResampleMethod, scale: ScaleFactor) -> Self {
        UrOperator::Downsample { method, scale }
    }

    pub fn degrade(spec: DegradationSpec, scale: ScaleFactor) -> Self {
        UrOperator::Degrade { spec, scale }
    }

    pub fn scale(&self) -> ScaleFactor {
        match self {
            UrOperator::Downsample { scale, .. } | UrOperator::Degrade { scale, .. } => *scale,
        }
    }

    pub fn apply(&self, img: &ImageTensor) -> Result<ImageTensor> {
        match self {
            UrOperator::Downsample { method, scale } => downsample(img, *scale, *method),
            UrOperator::Degrade { spec, scale } => degrade(img, spec, *scale),
        }
    }

    /// The operator without its additive noise term, which is linear for
    /// every variant.
    pub fn apply_linear(&self, img: &ImageTensor) -> Result<ImageTensor> {
        match self {
            UrOperator::Downsample { method, scale } => downsample(img, *scale, *method),
            UrOperator::Degrade { spec, scale } => degrade_noiseless(img, spec, *scale),
        }
    }

    /// Dense matrix of [`UrOperator::apply_linear`] on `h × w × c` inputs,
    /// built column by column from basis images.
    pub fn linear_matrix(&self, h: usize, w: usize, c: usize) -> Result<DenseMatrix> {
        let n = h * w * c;
        if n == 0 || n > crate::sr::MATRIX_SIZE_LIMIT {
            return Err(Error::Validation(format!(
                "input dimension {n} outside 1..={}",
                crate::sr::MATRIX_SIZE_LIMIT
            )));
        }
        crate::sr::operator_matrix(n, |basis| {
            Ok(self.apply_linear(&ImageTensor::new(h, w, c, basis)?)?.into_data())
        })
    }
}

impl fmt::Display for UrOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UrOperator::Downsample { method, scale } => write!(f, "{method}-down x{scale}"),
            UrOperator::Degrade { spec, scale } => write!(
                f,
                "degrade({}x{} kernel, {:?} sigma={}) x{scale}",
                spec.kernel.rows, spec.kernel.cols, spec.noise_kind, spec.noise_sigma
            ),
        }
    }
}
