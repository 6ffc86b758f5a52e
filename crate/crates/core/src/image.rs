//! Image tensors and the pixel-domain arithmetic the loop is written in.
//!
//! An [`ImageTensor`] is a dense `height × width × channels` grid of `f64`
//! stored row-major with interleaved channels, so `vec(x)` in the linear
//! algebra sense is simply [`ImageTensor::data`]. Values are nominally in
//! `[0, 1]` but nothing clamps them until an image is written to disk.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::codecs::png::PngEncoder;
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageError, ImageReader};

use crate::error::{Error, Result};

/// Normalization convention shared by file I/O and PSNR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelEncoding {
    pub bit_depth: u32,
    pub peak: f64,
}

impl PixelEncoding {
    pub const EIGHT_BIT: PixelEncoding = PixelEncoding {
        bit_depth: 8,
        peak: 1.0,
    };

    pub fn new(bit_depth: u32, peak: f64) -> Result<Self> {
        if peak.is_nan() || peak <= 0.0 {
            return Err(Error::Validation(format!("peak must be positive, got {peak}")));
        }
        if bit_depth == 0 || bit_depth > 16 {
            return Err(Error::Validation(format!("unsupported bit depth {bit_depth}")));
        }
        Ok(PixelEncoding { bit_depth, peak })
    }

    /// Largest stored code, `2^bit_depth - 1`.
    pub fn max_code(&self) -> f64 {
        ((1u32 << self.bit_depth) - 1) as f64
    }
}

impl Default for PixelEncoding {
    fn default() -> Self {
        Self::EIGHT_BIT
    }
}

/// Axis-aligned pixel rectangle, `x`/`y` being the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

/// A real-valued `height × width × channels` image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    /// Wraps `data` after checking the shape and that every value is finite.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Validation(format!(
                "image dimensions must be positive, got {height}x{width}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Validation(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "data length {} does not match {height}x{width}x{channels}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite value at index {i}")));
        }
        Ok(ImageTensor {
            height,
            width,
            channels,
            data,
        })
    }

    /// Internal constructor for results of arithmetic on valid tensors; the
    /// caller guarantees the shape, finiteness is checked where it matters.
    pub(crate) fn from_parts(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width * channels);
        ImageTensor {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::filled(height, width, channels, 0.0)
    }

    /// Builds a tensor by evaluating `f(row, col, channel)` at every sample.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(height, width, channels)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    /// Total number of samples, the dimension of the flattened vector.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn same_shape(&self, other: &ImageTensor) -> bool {
        self.dims() == other.dims()
    }

    pub(crate) fn check_same_shape(&self, other: &ImageTensor, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{what}: {:?} vs {:?}",
                self.dims(),
                other.dims()
            )))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImageTensor {
        ImageTensor::from_parts(
            self.height,
            self.width,
            self.channels,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn scale(&self, alpha: f64) -> ImageTensor {
        self.map(|v| alpha * v)
    }

    /// `self - other`.
    pub fn sub(&self, other: &ImageTensor) -> Result<ImageTensor> {
        axpy(-1.0, other, self)
    }

    pub fn clamp01(&self) -> ImageTensor {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copies the single channel into three identical channels. Three-channel
    /// inputs are returned unchanged.
    pub fn replicate_channels(&self) -> ImageTensor {
        if self.channels == 3 {
            return self.clone();
        }
        let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
        ImageTensor::from_parts(self.height, self.width, 3, data)
    }

    /// Extracts one channel as a single-channel tensor.
    pub fn channel(&self, c: usize) -> ImageTensor {
        assert!(c < self.channels, "channel {c} out of range");
        let data = self
            .data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect();
        ImageTensor::from_parts(self.height, self.width, 1, data)
    }

    pub fn crop(&self, rect: Rect) -> Result<ImageTensor> {
        if rect.width == 0
            || rect.height == 0
            || rect.x + rect.width > self.width
            || rect.y + rect.height > self.height
        {
            return Err(Error::Validation(format!(
                "rectangle {rect:?} outside {}x{} image",
                self.height, self.width
            )));
        }
        let c = self.channels;
        let mut data = Vec::with_capacity(rect.width * rect.height * c);
        for y in rect.y..rect.y + rect.height {
            let start = (y * self.width + rect.x) * c;
            data.extend_from_slice(&self.data[start..start + rect.width * c]);
        }
        Ok(ImageTensor::from_parts(rect.height, rect.width, c, data))
    }

    /// Center-crops both sides down to the nearest multiple of `multiple`.
    /// Returns `None` when no crop was needed.
    pub fn center_crop_to_multiple(&self, multiple: usize) -> Result<Option<ImageTensor>> {
        let h = self.height - self.height % multiple;
        let w = self.width - self.width % multiple;
        if h == 0 || w == 0 {
            return Err(Error::Shape(format!(
                "{}x{} image is smaller than scale {multiple}",
                self.height, self.width
            )));
        }
        if h == self.height && w == self.width {
            return Ok(None);
        }
        let rect = Rect {
            x: (self.width - w) / 2,
            y: (self.height - h) / 2,
            width: w,
            height: h,
        };
        self.crop(rect).map(Some)
    }
}

/// `alpha·x + y`, elementwise.
pub fn axpy(alpha: f64, x: &ImageTensor, y: &ImageTensor) -> Result<ImageTensor> {
    x.check_same_shape(y, "axpy")?;
    let data = x
        .data
        .iter()
        .zip(&y.data)
        .map(|(&a, &b)| alpha * a + b)
        .collect();
    Ok(ImageTensor::from_parts(x.height, x.width, x.channels, data))
}

/// Euclidean norm over every sample.
pub fn norm2(x: &ImageTensor) -> f64 {
    dot(x.data(), x.data()).sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Reads a PNG or binary PGM/PPM file and maps 8-bit codes to `[0, 1]`.
///
/// Grayscale files produce one channel unless `replicate` is set, in which
/// case the channel is copied three times. Alpha channels are dropped.
pub fn load_image(path: impl AsRef<Path>, replicate: bool) -> Result<ImageTensor> {
    let path = path.as_ref();
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    if reader.format().is_none() {
        return Err(Error::Format {
            path: path.display().to_string(),
            reason: "unrecognized file signature".into(),
        });
    }
    let decoded = reader.decode().map_err(|e| map_image_error(path, e))?;
    let scale = 1.0 / PixelEncoding::EIGHT_BIT.max_code();
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let img = match decoded {
        DynamicImage::ImageLuma8(buf) => {
            ImageTensor::new(h, w, 1, buf.into_raw().into_iter().map(|v| v as f64 * scale).collect())?
        }
        DynamicImage::ImageLumaA8(_) => {
            let buf = decoded.to_luma8();
            ImageTensor::new(h, w, 1, buf.into_raw().into_iter().map(|v| v as f64 * scale).collect())?
        }
        DynamicImage::ImageRgb8(buf) => {
            ImageTensor::new(h, w, 3, buf.into_raw().into_iter().map(|v| v as f64 * scale).collect())?
        }
        DynamicImage::ImageRgba8(_) => {
            let buf = decoded.to_rgb8();
            ImageTensor::new(h, w, 3, buf.into_raw().into_iter().map(|v| v as f64 * scale).collect())?
        }
        other => {
            return Err(Error::Format {
                path: path.display().to_string(),
                reason: format!("only 8-bit images are supported, got {:?}", other.color()),
            })
        }
    };
    Ok(if replicate { img.replicate_channels() } else { img })
}

fn map_image_error(path: &Path, e: ImageError) -> Error {
    match e {
        ImageError::IoError(source) => Error::io(path, source),
        ImageError::Unsupported(u) => Error::Format {
            path: path.display().to_string(),
            reason: u.to_string(),
        },
        // A recognized signature followed by undecodable content is a
        // damaged file, which callers treat as an I/O failure.
        other => Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::InvalidData, other.to_string()),
        ),
    }
}

/// Clamps to `[0, 1]`, quantizes with `round(v·255)` and writes an 8-bit file.
/// The format follows the extension: `.png`, `.pgm` (one channel) or `.ppm`.
pub fn save_image(img: &ImageTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = img.data.iter().map(|&v| quantize(v)).collect();
    let (w, h) = (img.width as u32, img.height as u32);
    let color = if img.channels == 1 {
        ExtendedColorType::L8
    } else {
        ExtendedColorType::Rgb8
    };
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let out = BufWriter::new(file);
    let result = match ext.as_str() {
        "png" => PngEncoder::new(out).write_image(&bytes, w, h, color),
        "pgm" | "ppm" | "pnm" => {
            let subtype = if img.channels == 1 {
                PnmSubtype::Graymap(SampleEncoding::Binary)
            } else {
                PnmSubtype::Pixmap(SampleEncoding::Binary)
            };
            if (ext == "pgm" && img.channels != 1) || (ext == "ppm" && img.channels != 3) {
                return Err(Error::Validation(format!(
                    "{} channel image cannot be written as .{ext}",
                    img.channels
                )));
            }
            PnmEncoder::new(out).with_subtype(subtype).write_image(&bytes, w, h, color)
        }
        _ => {
            return Err(Error::Format {
                path: path.display().to_string(),
                reason: "output extension must be png, pgm or ppm".into(),
            })
        }
    };
    result.map_err(|e| map_image_error(path, e))
}

/// 8-bit code written for intensity `v`.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}
