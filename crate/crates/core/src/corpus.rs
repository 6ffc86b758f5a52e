//! Synthetic grayscale test images.
//!
//! Four families, cycled in order: smooth gradients, checkerboards, sums of
//! Gaussian blobs, and glyphs (block capitals with hard, high-contrast
//! edges). Every image is a pure function of `(seed, index)`.

use std::fmt;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::{save_image, ImageTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CorpusKind {
    Gradient,
    Checkerboard,
    Blobs,
    Glyph,
}

impl CorpusKind {
    pub const ALL: [CorpusKind; 4] = [
        CorpusKind::Gradient,
        CorpusKind::Checkerboard,
        CorpusKind::Blobs,
        CorpusKind::Glyph,
    ];

    pub fn for_index(i: usize) -> Self {
        Self::ALL[i % Self::ALL.len()]
    }

    /// Recovers the kind from an image id produced by [`image_id`].
    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| id.ends_with(&format!("_{k}")))
    }
}

impl fmt::Display for CorpusKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorpusKind::Gradient => "gradient",
            CorpusKind::Checkerboard => "checker",
            CorpusKind::Blobs => "blobs",
            CorpusKind::Glyph => "glyph",
        })
    }
}

pub fn image_id(index: usize) -> String {
    format!("{index:02}_{}", CorpusKind::for_index(index))
}

/// Generates image `index` of the corpus for `seed`.
pub fn generate(index: usize, height: usize, width: usize, seed: u64) -> Result<ImageTensor> {
    if height < 4 || width < 4 {
        return Err(Error::Validation(format!(
            "corpus images must be at least 4x4, got {height}x{width}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    match CorpusKind::for_index(index) {
        CorpusKind::Gradient => gradient(&mut rng, height, width),
        CorpusKind::Checkerboard => checkerboard(&mut rng, height, width),
        CorpusKind::Blobs => blobs(&mut rng, height, width),
        CorpusKind::Glyph => glyph(&mut rng, height, width),
    }
}

/// Writes `count` PNG images into `dir` and returns their paths.
pub fn write_corpus(dir: impl AsRef<Path>, count: usize, height: usize, width: usize, seed: u64) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    (0..count)
        .map(|i| {
            let path = dir.join(format!("{}.png", image_id(i)));
            save_image(&generate(i, height, width, seed)?, &path)?;
            Ok(path)
        })
        .collect()
}

fn gradient(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Result<ImageTensor> {
    let theta = rng.gen_range(0.0..std::f64::consts::TAU);
    let (c, s) = (theta.cos(), theta.sin());
    let base = rng.gen_range(0.2..0.4);
    let amp = rng.gen_range(0.2..0.4);
    let curve = rng.gen_range(-0.15..0.15);
    let scale = h.max(w) as f64;
    ImageTensor::from_fn(h, w, 1, |y, x, _| {
        let t = (c * (x as f64 - w as f64 / 2.0) + s * (y as f64 - h as f64 / 2.0)) / scale + 0.5;
        (base + amp * t + curve * t * t).clamp(0.0, 1.0)
    })
}

fn checkerboard(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Result<ImageTensor> {
    let cell = rng.gen_range(4..=12usize);
    let (ox, oy) = (rng.gen_range(0..cell), rng.gen_range(0..cell));
    let lo = rng.gen_range(0.1..0.3);
    let hi = rng.gen_range(0.7..0.9);
    ImageTensor::from_fn(h, w, 1, |y, x, _| {
        if ((x + ox) / cell + (y + oy) / cell) % 2 == 0 {
            lo
        } else {
            hi
        }
    })
}

fn blobs(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Result<ImageTensor> {
    let n = rng.gen_range(3..=6);
    let size = h.min(w) as f64;
    let background = rng.gen_range(0.05..0.2);
    let blobs: Vec<(f64, f64, f64, f64)> = (0..n)
        .map(|_| {
            (
                rng.gen_range(0.0..h as f64),
                rng.gen_range(0.0..w as f64),
                rng.gen_range(size / 16.0..size / 5.0),
                rng.gen_range(0.2..0.6),
            )
        })
        .collect();
    ImageTensor::from_fn(h, w, 1, |y, x, _| {
        let v: f64 = blobs
            .iter()
            .map(|&(cy, cx, sigma, amp)| {
                let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                amp * (-d2 / (2.0 * sigma * sigma)).exp()
            })
            .sum();
        (background + v).clamp(0.0, 1.0)
    })
}

type Segment = ((f64, f64), (f64, f64));

/// Stroke skeletons in a unit box, `(x, y)` with `y` pointing down.
const GLYPHS: &[&[Segment]] = &[
    // R
    &[
        ((0.0, 0.0), (0.0, 1.0)),
        ((0.0, 0.0), (0.6, 0.0)),
        ((0.6, 0.0), (0.8, 0.15)),
        ((0.8, 0.15), (0.8, 0.35)),
        ((0.8, 0.35), (0.6, 0.5)),
        ((0.6, 0.5), (0.0, 0.5)),
        ((0.4, 0.5), (0.85, 1.0)),
    ],
    // E
    &[
        ((0.0, 0.0), (0.0, 1.0)),
        ((0.0, 0.0), (0.8, 0.0)),
        ((0.0, 0.5), (0.6, 0.5)),
        ((0.0, 1.0), (0.8, 1.0)),
    ],
    // K
    &[
        ((0.0, 0.0), (0.0, 1.0)),
        ((0.8, 0.0), (0.0, 0.55)),
        ((0.3, 0.38), (0.85, 1.0)),
    ],
    // A
    &[
        ((0.0, 1.0), (0.45, 0.0)),
        ((0.45, 0.0), (0.9, 1.0)),
        ((0.2, 0.6), (0.7, 0.6)),
    ],
    // H
    &[
        ((0.0, 0.0), (0.0, 1.0)),
        ((0.8, 0.0), (0.8, 1.0)),
        ((0.0, 0.5), (0.8, 0.5)),
    ],
];

fn segment_distance(p: (f64, f64), seg: &Segment) -> f64 {
    let ((ax, ay), (bx, by)) = *seg;
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    let t = (((p.0 - ax) * dx + (p.1 - ay) * dy) / len2).clamp(0.0, 1.0);
    ((p.0 - ax - t * dx).powi(2) + (p.1 - ay - t * dy).powi(2)).sqrt()
}

fn glyph(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Result<ImageTensor> {
    let strokes = GLYPHS[rng.gen_range(0..GLYPHS.len())];
    let side = h.min(w) as f64;
    let box_size = rng.gen_range(0.5..0.7) * side;
    let thickness = rng.gen_range(0.09..0.14);
    let margin = thickness * box_size;
    let ox = rng.gen_range(margin..(w as f64 - box_size - margin).max(margin + 1.0));
    let oy = rng.gen_range(margin..(h as f64 - box_size - margin).max(margin + 1.0));
    let (ink, paper) = if rng.gen_bool(0.5) {
        (rng.gen_range(0.8..0.95), rng.gen_range(0.05..0.2))
    } else {
        (rng.gen_range(0.05..0.2), rng.gen_range(0.8..0.95))
    };
    const SS: usize = 4;
    ImageTensor::from_fn(h, w, 1, |y, x, _| {
        let mut covered = 0;
        for sy in 0..SS {
            for sx in 0..SS {
                let px = (x as f64 + (sx as f64 + 0.5) / SS as f64 - ox) / box_size;
                let py = (y as f64 + (sy as f64 + 0.5) / SS as f64 - oy) / box_size;
                if strokes
                    .iter()
                    .any(|seg| segment_distance((px, py), seg) <= thickness / 2.0)
                {
                    covered += 1;
                }
            }
        }
        let a = covered as f64 / (SS * SS) as f64;
        a * ink + (1.0 - a) * paper
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_in_range() {
        for i in 0..8 {
            let a = generate(i, 24, 20, 5).unwrap();
            assert_eq!(a, generate(i, 24, 20, 5).unwrap());
            assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
            assert_eq!(a.dims(), (24, 20, 1));
        }
        assert_ne!(generate(3, 24, 24, 0).unwrap(), generate(3, 24, 24, 1).unwrap());
    }

    #[test]
    fn ids_round_trip_kind() {
        assert_eq!(image_id(3), "03_glyph");
        assert_eq!(CorpusKind::from_id(&image_id(3)), Some(CorpusKind::Glyph));
        assert_eq!(CorpusKind::from_id(&image_id(5)), Some(CorpusKind::Checkerboard));
        assert_eq!(CorpusKind::from_id("scan"), None);
    }

    #[test]
    fn glyph_has_strong_edges() {
        let g = generate(3, 48, 48, 0).unwrap();
        let (lo, hi) = g
            .data()
            .iter()
            .fold((1.0f64, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        assert!(hi - lo > 0.55);
    }
}
