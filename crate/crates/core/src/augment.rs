//! Image + mask augmentation restricted to rotation, translation,
//! brightness and blur. Flips and mosaics are intentionally unsupported:
//! they would break the left/right anatomy that segment labels depend on.
//!
//! Geometry is applied about the image center `((w-1)/2, (h-1)/2)` in pixel
//! index coordinates, so quarter turns on a square canvas are exact index
//! permutations. The image is resampled bilinearly, the mask by nearest
//! neighbour; out-of-frame samples read 0 / background.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{GrayImage, LabelMask, MaskError};
use crate::rng::{self, tag};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error(transparent)]
    ShapeMismatch(#[from] MaskError),
    #[error("bad range for {field}: [{min}, {max}]")]
    BadRange { field: &'static str, min: f64, max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AugmentSpec {
    /// Counter-clockwise as displayed (y axis pointing down).
    pub rotation_deg: f64,
    pub translate_px: (i32, i32),
    /// Added on the 8-bit scale, then clamped to `[0, 255]`.
    pub brightness_delta: f64,
    pub blur_sigma: f64,
    pub seed: u64,
}

impl AugmentSpec {
    pub fn identity() -> Self {
        Self::default()
    }
}

/// Inclusive sampling bounds for [`sample_spec`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentRanges {
    pub rotation_deg: (f64, f64),
    pub translate_px: (i32, i32),
    pub brightness_delta: (f64, f64),
    pub blur_sigma: (f64, f64),
}

impl Default for AugmentRanges {
    fn default() -> Self {
        Self {
            rotation_deg: (-15.0, 15.0),
            translate_px: (-20, 20),
            brightness_delta: (-32.0, 32.0),
            blur_sigma: (0.0, 1.5),
        }
    }
}

impl AugmentRanges {
    pub fn validate(&self) -> Result<(), AugmentError> {
        let check = |field, (min, max): (f64, f64), lo: f64, hi: f64| {
            if !(min.is_finite() && max.is_finite() && lo <= min && min <= max && max <= hi) {
                return Err(AugmentError::BadRange { field, min, max });
            }
            Ok(())
        };
        check("rotation_deg", self.rotation_deg, -30.0, 30.0)?;
        check("brightness_delta", self.brightness_delta, -64.0, 64.0)?;
        check("blur_sigma", self.blur_sigma, 0.0, f64::MAX)?;
        let (tmin, tmax) = self.translate_px;
        if tmin > tmax {
            return Err(AugmentError::BadRange {
                field: "translate_px",
                min: tmin as f64,
                max: tmax as f64,
            });
        }
        Ok(())
    }
}

fn uniform(r: &mut impl Rng, (min, max): (f64, f64)) -> f64 {
    if min == max {
        min
    } else {
        r.random_range(min..=max)
    }
}

/// Draws each field uniformly from its range.
pub fn sample_spec(seed: u64, ranges: &AugmentRanges) -> Result<AugmentSpec, AugmentError> {
    ranges.validate()?;
    let mut r = rng::stream(seed, &[tag::AUGMENT]);
    let rotation_deg = uniform(&mut r, ranges.rotation_deg);
    let (tmin, tmax) = ranges.translate_px;
    let dx = r.random_range(tmin..=tmax);
    let dy = r.random_range(tmin..=tmax);
    let brightness_delta = uniform(&mut r, ranges.brightness_delta);
    let blur_sigma = uniform(&mut r, ranges.blur_sigma);
    Ok(AugmentSpec {
        rotation_deg,
        translate_px: (dx, dy),
        brightness_delta,
        blur_sigma,
        seed,
    })
}

/// `(cos, sin)` with exact values on quarter turns.
fn rotation(deg: f64) -> (f64, f64) {
    let quarter = deg / 90.0;
    if quarter.fract() == 0.0 {
        match (quarter as i64).rem_euclid(4) {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        }
    } else {
        let r = deg.to_radians();
        (r.cos(), r.sin())
    }
}

/// Output pixel `(x, y)` reads source `inverse(x, y)`.
struct InverseMap {
    cos: f64,
    sin: f64,
    cx: f64,
    cy: f64,
    dx: f64,
    dy: f64,
}

impl InverseMap {
    fn new(spec: &AugmentSpec, w: u32, h: u32) -> Self {
        let (cos, sin) = rotation(spec.rotation_deg);
        Self {
            cos,
            sin,
            cx: (w as f64 - 1.0) / 2.0,
            cy: (h as f64 - 1.0) / 2.0,
            dx: spec.translate_px.0 as f64,
            dy: spec.translate_px.1 as f64,
        }
    }

    fn source(&self, x: u32, y: u32) -> (f64, f64) {
        let u = x as f64 - self.cx - self.dx;
        let v = y as f64 - self.cy - self.dy;
        // Forward rotation on screen (y down) is (u cos + v sin, -u sin + v cos);
        // this is its inverse.
        (self.cx + u * self.cos - v * self.sin, self.cy + u * self.sin + v * self.cos)
    }

    fn is_identity(&self) -> bool {
        self.cos == 1.0 && self.sin == 0.0 && self.dx == 0.0 && self.dy == 0.0
    }
}

fn warp_image(img: &GrayImage, map: &InverseMap) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    let mut out = GrayImage::new(w, h);
    let sample = |x: i64, y: i64| -> f64 {
        if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
            0.0
        } else {
            img.get(x as u32, y as u32) as f64
        }
    };
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = map.source(x, y);
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as i64, y0 as i64);
            let top = sample(x0, y0) * (1.0 - fx) + sample(x0 + 1, y0) * fx;
            let bottom = sample(x0, y0 + 1) * (1.0 - fx) + sample(x0 + 1, y0 + 1) * fx;
            let v = top * (1.0 - fy) + bottom * fy;
            out.data_mut()[(y * w + x) as usize] = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

fn warp_mask(mask: &LabelMask, map: &InverseMap) -> LabelMask {
    let (w, h) = (mask.width(), mask.height());
    let mut out = LabelMask::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = map.source(x, y);
            let (nx, ny) = (sx.round(), sy.round());
            if nx >= 0.0 && ny >= 0.0 && nx < w as f64 && ny < h as f64 {
                out.cells_mut()[(y * w + x) as usize] = mask.cells()[(ny as u32 * w + nx as u32) as usize];
            }
        }
    }
    out
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.into_iter().map(|v| v / sum).collect()
}

/// Separable Gaussian blur with replicated borders.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> GrayImage {
    if sigma <= 0.0 {
        return img.clone();
    }
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as i64;
    let (w, h) = (img.width() as i64, img.height() as i64);
    let src: Vec<f64> = img.data().iter().map(|&v| v as f64).collect();
    let mut tmp = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            tmp[(y * w + x) as usize] = kernel
                .iter()
                .enumerate()
                .map(|(i, k)| k * src[(y * w + (x + i as i64 - r).clamp(0, w - 1)) as usize])
                .sum();
        }
    }
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            let v: f64 = kernel
                .iter()
                .enumerate()
                .map(|(i, k)| k * tmp[((y + i as i64 - r).clamp(0, h - 1) * w + x) as usize])
                .sum();
            out.data_mut()[(y * w + x) as usize] = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

/// Geometry first (image and mask alike), then brightness and blur on the
/// image only.
pub fn apply(image: &GrayImage, mask: &LabelMask, spec: &AugmentSpec) -> Result<(GrayImage, LabelMask), AugmentError> {
    mask.same_shape(image)?;
    let map = InverseMap::new(spec, image.width(), image.height());
    let (mut img, mask) = if map.is_identity() {
        (image.clone(), mask.clone())
    } else {
        (warp_image(image, &map), warp_mask(mask, &map))
    };
    if spec.brightness_delta != 0.0 {
        for v in img.data_mut() {
            *v = (*v as f64 + spec.brightness_delta).round().clamp(0.0, 255.0) as u8;
        }
    }
    let img = gaussian_blur(&img, spec.blur_sigma);
    Ok((img, mask))
}
