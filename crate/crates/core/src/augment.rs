//! Augmentation operators and the augmentation distribution.
//!
//! Images are treated as piecewise functions on the unit square, pixel
//! `(r, c)` covering `[r/d, (r+1)/d) × [c/d, (c+1)/d)` with its value at the
//! cell centre. A crop selects a `θ × θ` window and resamples it back to
//! `d × d` with bilinear interpolation (nearest neighbour for labels).

use crate::error::{invalid, Result};
use crate::math;
use crate::pixel_model::{Image, SemanticMap, CHANNELS};
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Random-resized-crop parameters.
///
/// The window is `[offset_row, offset_row + scale] × [offset_col, offset_col + scale]`
/// in unit coordinates. Windows that leave the frame are shifted back inside
/// rather than padded, and `scale` is floored at one pixel (`1/d`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropParams {
    pub scale: f64,
    pub offset_row: f64,
    pub offset_col: f64,
}

impl CropParams {
    pub const IDENTITY: CropParams = CropParams { scale: 1.0, offset_row: 0.0, offset_col: 0.0 };

    /// Window actually sampled for a `side`-pixel image: `(scale, row0, col0)`
    /// in unit coordinates.
    pub fn window(&self, side: usize) -> (f64, f64, f64) {
        let scale = self.scale.clamp(1.0 / side as f64, 1.0);
        let row0 = self.offset_row.clamp(0.0, 1.0).min(1.0 - scale);
        let col0 = self.offset_col.clamp(0.0, 1.0).min(1.0 - scale);
        (scale, row0, col0)
    }
}

/// Per-channel brightness gains `λ ∈ (0, b]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColorParams {
    pub gains: [f64; CHANNELS],
}

/// One recorded transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Transform {
    Crop(CropParams),
    Flip,
    Color(ColorParams),
    Gray,
}

/// A sampled augmentation: transforms applied in order. Empty is the identity.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Augmentation {
    pub transforms: Vec<Transform>,
}

impl Augmentation {
    pub fn identity() -> Self {
        Augmentation { transforms: Vec::new() }
    }

    pub fn is_identity(&self) -> bool {
        self.transforms.is_empty()
    }

    pub fn apply(&self, img: &Image) -> Image {
        let mut out = img.clone();
        for t in &self.transforms {
            out = match t {
                Transform::Crop(p) => apply_crop(&out, p),
                Transform::Flip => apply_flip(&out),
                Transform::Color(p) => apply_color(&out, p),
                Transform::Gray => apply_gray(&out),
            };
        }
        out
    }

    /// Applies the geometric part (crop, flip) to a label map.
    pub fn apply_map(&self, map: &SemanticMap) -> SemanticMap {
        let mut out = map.clone();
        for t in &self.transforms {
            match t {
                Transform::Crop(p) => out = crop_semantic_map(&out, p),
                Transform::Flip => out = flip_map(&out),
                Transform::Color(_) | Transform::Gray => {}
            }
        }
        out
    }
}

/// The augmentation distribution `P_A`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugDistribution {
    pub crop_scale_min: f64,
    pub crop_scale_max: f64,
    /// Upper bound `b` of the brightness gains.
    pub brightness_bound: f64,
    pub flip_prob: f64,
    pub color_prob: f64,
    pub gray_prob: f64,
}

impl Default for AugDistribution {
    /// SimCLR-style defaults: crop scale in `[0.2, 1.0]`, flip 0.5, colour 0.8,
    /// grayscale 0.2, gains in `(0, 1]`.
    fn default() -> Self {
        AugDistribution {
            crop_scale_min: 0.2,
            crop_scale_max: 1.0,
            brightness_bound: 1.0,
            flip_prob: 0.5,
            color_prob: 0.8,
            gray_prob: 0.2,
        }
    }
}

impl AugDistribution {
    /// Distribution whose every draw acts as the identity.
    pub fn identity() -> Self {
        AugDistribution {
            crop_scale_min: 1.0,
            crop_scale_max: 1.0,
            brightness_bound: 1.0,
            flip_prob: 0.0,
            color_prob: 0.0,
            gray_prob: 0.0,
        }
    }

    /// Crops only, scale in `[min, max]`.
    pub fn crop_only(min: f64, max: f64) -> Self {
        AugDistribution { crop_scale_min: min, crop_scale_max: max, ..Self::identity() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.crop_scale_min > 0.0 && self.crop_scale_min <= self.crop_scale_max && self.crop_scale_max <= 1.0) {
            return Err(invalid("crop scale range must satisfy 0 < min <= max <= 1"));
        }
        if !(self.brightness_bound > 0.0 && self.brightness_bound.is_finite()) {
            return Err(invalid("brightness_bound must be positive"));
        }
        for (name, p) in [("flip_prob", self.flip_prob), ("color_prob", self.color_prob), ("gray_prob", self.gray_prob)]
        {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(alloc::format!("{name} must lie in [0,1]")));
            }
        }
        Ok(())
    }
}

/// Draws one augmentation.
///
/// Exactly nine uniforms are consumed per call whatever the probabilities, so
/// two distributions that differ only in their parameters see the same
/// underlying randomness for the same seed (common random numbers across a
/// sweep).
pub fn sample_augmentation<R: Rng + ?Sized>(dist: &AugDistribution, rng: &mut R) -> Augmentation {
    let u: [f64; 9] = core::array::from_fn(|_| rng.random());
    let [u_scale, u_row, u_col, u_flip, u_color, g0, g1, g2, u_gray] = u;

    let scale = dist.crop_scale_max - u_scale * (dist.crop_scale_max - dist.crop_scale_min);
    let mut transforms = Vec::with_capacity(4);
    transforms.push(Transform::Crop(CropParams { scale, offset_row: u_row, offset_col: u_col }));
    if u_flip < dist.flip_prob {
        transforms.push(Transform::Flip);
    }
    if u_color < dist.color_prob {
        let b = dist.brightness_bound;
        transforms.push(Transform::Color(ColorParams { gains: [b * (1.0 - g0), b * (1.0 - g1), b * (1.0 - g2)] }));
    }
    if u_gray < dist.gray_prob {
        transforms.push(Transform::Gray);
    }
    Augmentation { transforms }
}

// Source coordinate (in pixel units, clamped to the frame) for output index `i`.
#[inline]
fn source_coord(start: f64, scale: f64, side: usize, i: usize) -> f64 {
    let p = start * side as f64 + scale * (i as f64 + 0.5) - 0.5;
    p.clamp(0.0, (side - 1) as f64)
}

#[inline]
fn split(p: f64, side: usize) -> (usize, usize, f64) {
    let i0 = math::floor(p) as usize;
    let i1 = (i0 + 1).min(side - 1);
    (i0, i1, p - i0 as f64)
}

/// Random resized crop: bilinear resample of the window back to `d × d`.
pub fn apply_crop(img: &Image, p: &CropParams) -> Image {
    let side = img.side();
    let (scale, row0, col0) = p.window(side);
    let rows: Vec<_> = (0..side).map(|r| split(source_coord(row0, scale, side, r), side)).collect();
    let cols: Vec<_> = (0..side).map(|c| split(source_coord(col0, scale, side, c), side)).collect();
    let mut data = Vec::with_capacity(side * side * CHANNELS);
    for &(r0, r1, fr) in &rows {
        for &(c0, c1, fc) in &cols {
            for ch in 0..CHANNELS {
                let v00 = img.get(r0, c0, ch);
                let v01 = img.get(r0, c1, ch);
                let v10 = img.get(r1, c0, ch);
                let v11 = img.get(r1, c1, ch);
                data.push(
                    v00 * (1.0 - fr) * (1.0 - fc) + v01 * (1.0 - fr) * fc + v10 * fr * (1.0 - fc) + v11 * fr * fc,
                );
            }
        }
    }
    Image::from_raw(side, data)
}

/// Same window as [`apply_crop`], nearest-neighbour resampling of labels.
pub fn crop_semantic_map(map: &SemanticMap, p: &CropParams) -> SemanticMap {
    let side = map.side();
    let (scale, row0, col0) = p.window(side);
    let nearest =
        |start: f64, i: usize| (math::floor(source_coord(start, scale, side, i) + 0.5) as usize).min(side - 1);
    let mut labels = Vec::with_capacity(side * side);
    for r in 0..side {
        let sr = nearest(row0, r);
        for c in 0..side {
            labels.push(map.get(sr, nearest(col0, c)));
        }
    }
    SemanticMap::new(side, labels).expect("same side")
}

/// Multiplies channel `i` by `λ_i`.
pub fn apply_color(img: &Image, p: &ColorParams) -> Image {
    let data = img.as_slice().iter().enumerate().map(|(i, v)| v * p.gains[i % CHANNELS]).collect();
    Image::from_raw(img.side(), data)
}

/// Mirrors columns.
pub fn apply_flip(img: &Image) -> Image {
    let side = img.side();
    let mut data = Vec::with_capacity(side * side * CHANNELS);
    for r in 0..side {
        for c in (0..side).rev() {
            for ch in 0..CHANNELS {
                data.push(img.get(r, c, ch));
            }
        }
    }
    Image::from_raw(side, data)
}

fn flip_map(map: &SemanticMap) -> SemanticMap {
    let side = map.side();
    let labels = (0..side).flat_map(|r| (0..side).rev().map(move |c| (r, c))).map(|(r, c)| map.get(r, c)).collect();
    SemanticMap::new(side, labels).expect("same side")
}

/// Replaces every channel by the per-pixel channel mean.
pub fn apply_gray(img: &Image) -> Image {
    let mut data = Vec::with_capacity(img.as_slice().len());
    for px in img.as_slice().chunks_exact(CHANNELS) {
        let g = if px[0] == px[1] && px[1] == px[2] { px[0] } else { (px[0] + px[1] + px[2]) / 3.0 };
        data.extend_from_slice(&[g; CHANNELS]);
    }
    Image::from_raw(img.side(), data)
}
