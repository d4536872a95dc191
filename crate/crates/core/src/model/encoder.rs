//! Toy image source and visual encoder.
//!
//! Images are rendered from masks with a fixed color per class plus noise.
//! The encoder average-pools by 8, then applies a learned 4x4 patch
//! projection, for a total stride of 32. The pseudo mask comes from a fixed
//! nearest-palette-color classifier.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Mat;
use crate::error::{Error, Result};
use crate::raster::{LandCover, SemanticMask, IGNORE, NUM_CLASSES};

pub const POOL: usize = 8;
pub const PATCH: usize = 4;
pub const STRIDE: usize = POOL * PATCH;

pub const PALETTE: [[f64; 3]; NUM_CLASSES] = [
    [0.05, 0.05, 0.05],
    [0.85, 0.30, 0.30],
    [0.60, 0.60, 0.60],
    [0.10, 0.30, 0.85],
    [0.70, 0.60, 0.40],
    [0.10, 0.50, 0.15],
    [0.60, 0.80, 0.30],
    [0.90, 0.75, 0.20],
];

/// Interleaved RGB in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * 3 {
            return Err(Error::DimensionMismatch { expected: height * width * 3, got: data.len() });
        }
        Ok(Image { height, width, data })
    }

    /// Palette colors plus uniform noise of amplitude `noise`; ignored pixels
    /// are drawn as background.
    pub fn render<R: Rng>(mask: &SemanticMask, noise: f64, rng: &mut R) -> Self {
        let mut data = Vec::with_capacity(mask.cells().len() * 3);
        for &c in mask.cells() {
            let color = if c == IGNORE { PALETTE[0] } else { PALETTE[c as usize] };
            for ch in color {
                let n = if noise > 0.0 { rng.gen_range(-noise..noise) } else { 0.0 };
                data.push((ch + n).clamp(0.0, 1.0));
            }
        }
        Image { height: mask.height(), width: mask.width(), data }
    }

    pub fn pixel(&self, r: usize, c: usize) -> [f64; 3] {
        let i = (r * self.width + c) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn check_stride(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.height % STRIDE != 0 || self.width % STRIDE != 0 {
            return Err(Error::invalid(
                "image",
                format!("{}x{} is not a positive multiple of {STRIDE}", self.height, self.width),
            ));
        }
        Ok(())
    }
}

/// Noise amplitude used for generated training images.
pub const RENDER_NOISE: f64 = 0.05;

/// Deterministic rendering keyed by `seed`.
pub fn render_sample_image(mask: &SemanticMask, seed: u64) -> Image {
    use rand::SeedableRng;
    Image::render(mask, RENDER_NOISE, &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed))
}

/// Nearest palette color per pixel.
pub fn classify_pixels(image: &Image, resolution_m: f64) -> Result<SemanticMask> {
    let mut cells = Vec::with_capacity(image.height * image.width);
    for r in 0..image.height {
        for c in 0..image.width {
            let p = image.pixel(r, c);
            let best = (0..NUM_CLASSES)
                .min_by(|&a, &b| dist2(p, PALETTE[a]).total_cmp(&dist2(p, PALETTE[b])))
                .unwrap();
            cells.push(best as u8);
        }
    }
    SemanticMask::new(image.height, image.width, cells, resolution_m)
}

fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum()
}

/// `k x k` average pooling to an `(h/k * w/k) x 3` matrix.
pub fn avg_pool(image: &Image, k: usize) -> Mat {
    let (ph, pw) = (image.height / k, image.width / k);
    let mut m = Mat::zeros(ph * pw, 3);
    let inv = 1.0 / (k * k) as f64;
    for r in 0..ph * k {
        for c in 0..pw * k {
            let p = image.pixel(r, c);
            let row = m.row_mut((r / k) * pw + c / k);
            for ch in 0..3 {
                row[ch] += p[ch] * inv;
            }
        }
    }
    m
}

/// Per-class pixel fractions over labeled pixels, as a `1 x 8` row.
pub fn class_fractions(mask: &SemanticMask) -> Mat {
    let hist = mask.class_histogram();
    let total = mask.labeled_count().max(1) as f64;
    Mat::row_vec(LandCover::ALL.iter().map(|&c| hist[c as usize] as f64 / total).collect())
}
