//! Separable resampling on a pixel-center grid with clamp-to-edge borders.
//!
//! Output sample `i` of a length-`out` axis sits at input coordinate
//! `(i + 0.5)·in/out − 0.5`. Every filter here has weights summing to one,
//! and sums are taken as offsets from the first tap, so constant images come
//! back bit-exact.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageTensor;

/// Integer resampling factor `s ∈ {1, 2, 3, 4}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct ScaleFactor(usize);

impl ScaleFactor {
    pub const X1: ScaleFactor = ScaleFactor(1);
    pub const X2: ScaleFactor = ScaleFactor(2);
    pub const X3: ScaleFactor = ScaleFactor(3);
    pub const X4: ScaleFactor = ScaleFactor(4);

    pub fn new(s: usize) -> Result<Self> {
        if (1..=4).contains(&s) {
            Ok(ScaleFactor(s))
        } else {
            Err(Error::Validation(format!("scale factor must be in 1..=4, got {s}")))
        }
    }

    pub fn get(self) -> usize {
        self.0
    }
}

impl TryFrom<usize> for ScaleFactor {
    type Error = Error;
    fn try_from(s: usize) -> Result<Self> {
        ScaleFactor::new(s)
    }
}

impl From<ScaleFactor> for usize {
    fn from(s: ScaleFactor) -> usize {
        s.0
    }
}

impl fmt::Display for ScaleFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Interpolation family shared by the down- and upsamplers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResampleMethod {
    Nearest,
    Bilinear,
    Bicubic,
    /// Exact block mean; only defined for integer reduction.
    Area,
}

impl FromStr for ResampleMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(ResampleMethod::Nearest),
            "bilinear" => Ok(ResampleMethod::Bilinear),
            "bicubic" => Ok(ResampleMethod::Bicubic),
            "area" => Ok(ResampleMethod::Area),
            _ => Err(Error::Validation(format!("unknown resampling method {s:?}"))),
        }
    }
}

impl fmt::Display for ResampleMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResampleMethod::Nearest => "nearest",
            ResampleMethod::Bilinear => "bilinear",
            ResampleMethod::Bicubic => "bicubic",
            ResampleMethod::Area => "area",
        })
    }
}

/// Catmull-Rom family parameter.
pub const CUBIC_A: f64 = -0.5;

/// Keys cubic convolution kernel with `a = -0.5`.
pub fn cubic_weight(x: f64) -> f64 {
    let x = x.abs();
    let a = CUBIC_A;
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

/// Per-output-sample taps along one axis: `(source index, weight)`.
#[derive(Debug, Clone)]
pub(crate) struct AxisTaps {
    taps: Vec<Vec<(usize, f64)>>,
}

impl AxisTaps {
    pub(crate) fn new(in_len: usize, out_len: usize, method: ResampleMethod) -> Result<Self> {
        let clamp = |k: isize| k.clamp(0, in_len as isize - 1) as usize;
        let ratio = in_len as f64 / out_len as f64;
        let taps = (0..out_len)
            .map(|i| match method {
                ResampleMethod::Nearest => {
                    // floor((i + 0.5)·in/out) in exact integer arithmetic
                    let src = ((2 * i + 1) * in_len) / (2 * out_len);
                    Ok(vec![(src.min(in_len - 1), 1.0)])
                }
                ResampleMethod::Bilinear => {
                    let c = (i as f64 + 0.5) * ratio - 0.5;
                    let f = c.floor();
                    let t = c - f;
                    let f = f as isize;
                    Ok(vec![(clamp(f), 1.0 - t), (clamp(f + 1), t)])
                }
                ResampleMethod::Bicubic => {
                    let c = (i as f64 + 0.5) * ratio - 0.5;
                    let f = c.floor() as isize;
                    Ok((f - 1..=f + 2)
                        .map(|k| (clamp(k), cubic_weight(c - k as f64)))
                        .collect())
                }
                ResampleMethod::Area => {
                    if out_len == 0 || in_len % out_len != 0 {
                        return Err(Error::Shape(format!(
                            "area resampling needs an integer reduction, got {in_len} -> {out_len}"
                        )));
                    }
                    let s = in_len / out_len;
                    let w = 1.0 / s as f64;
                    Ok((i * s..(i + 1) * s).map(|k| (k, w)).collect())
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AxisTaps { taps })
    }

    pub(crate) fn out_len(&self) -> usize {
        self.taps.len()
    }
}

/// Applies `rows` along the vertical axis and `cols` along the horizontal
/// axis, each channel independently.
pub(crate) fn apply_separable(img: &ImageTensor, rows: &AxisTaps, cols: &AxisTaps) -> ImageTensor {
    let (h, w, c) = img.dims();
    let src = img.data();
    let ow = cols.out_len();
    let oh = rows.out_len();

    let mut horiz = vec![0.0; h * ow * c];
    for y in 0..h {
        let row = &src[y * w * c..(y + 1) * w * c];
        let out = &mut horiz[y * ow * c..(y + 1) * ow * c];
        for (x, taps) in cols.taps.iter().enumerate() {
            for ch in 0..c {
                let a = row[taps[0].0 * c + ch];
                out[x * c + ch] = a + taps.iter().map(|&(k, wt)| wt * (row[k * c + ch] - a)).sum::<f64>();
            }
        }
    }

    let stride = ow * c;
    let mut data = vec![0.0; oh * stride];
    for (y, taps) in rows.taps.iter().enumerate() {
        let out = &mut data[y * stride..(y + 1) * stride];
        let anchor = &horiz[taps[0].0 * stride..(taps[0].0 + 1) * stride];
        for &(k, wt) in taps {
            let src_row = &horiz[k * stride..(k + 1) * stride];
            for ((o, &v), &a) in out.iter_mut().zip(src_row).zip(anchor) {
                *o += wt * (v - a);
            }
        }
        for (o, &a) in out.iter_mut().zip(anchor) {
            *o += a;
        }
    }
    ImageTensor::from_parts(oh, ow, c, data)
}

/// Resizes `img` to `out_h × out_w` with `method`.
pub(crate) fn resize(img: &ImageTensor, out_h: usize, out_w: usize, method: ResampleMethod) -> Result<ImageTensor> {
    let rows = AxisTaps::new(img.height(), out_h, method)?;
    let cols = AxisTaps::new(img.width(), out_w, method)?;
    Ok(apply_separable(img, &rows, &cols))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_factor_range() {
        assert!(ScaleFactor::new(0).is_err());
        assert!(ScaleFactor::new(5).is_err());
        assert_eq!(ScaleFactor::new(3).unwrap().get(), 3);
    }

    #[test]
    fn cubic_kernel_shape() {
        assert_eq!(cubic_weight(0.0), 1.0);
        assert_eq!(cubic_weight(1.0), 0.0);
        assert_eq!(cubic_weight(2.0), 0.0);
        assert_eq!(cubic_weight(-0.5), cubic_weight(0.5));
        // partition of unity at an arbitrary phase
        let t = 0.3;
        let sum: f64 = (-1..=2).map(|k| cubic_weight(t - k as f64)).sum();
        assert!((sum - 1.0).abs() < 1e-15);
    }

    #[test]
    fn taps_sum_to_one() {
        for method in [
            ResampleMethod::Nearest,
            ResampleMethod::Bilinear,
            ResampleMethod::Bicubic,
        ] {
            for (i, o) in [(8, 4), (6, 2), (3, 9), (4, 16), (5, 5)] {
                let taps = AxisTaps::new(i, o, method).unwrap();
                for t in &taps.taps {
                    let s: f64 = t.iter().map(|p| p.1).sum();
                    assert!((s - 1.0).abs() < 1e-14, "{method} {i}->{o}: {s}");
                }
            }
        }
        assert!(AxisTaps::new(7, 2, ResampleMethod::Area).is_err());
    }

    #[test]
    fn nearest_upsample_replicates() {
        let taps = AxisTaps::new(2, 6, ResampleMethod::Nearest).unwrap();
        let src: Vec<usize> = taps.taps.iter().map(|t| t[0].0).collect();
        assert_eq!(src, vec![0, 0, 0, 1, 1, 1]);
    }
}
