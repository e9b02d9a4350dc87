//! Semantic-label generative model for synthetic `d×d×3` images.
//!
//! An image of class `c` is produced by switching semantic labels on with
//! class-conditional probabilities, splitting the frame into one rectangle per
//! active semantic, and filling every pixel of a rectangle with independent
//! zero-truncated Gaussian values whose per-channel mean and standard
//! deviation depend only on the semantic.
//!
//! Indices are 0-based: classes are `0..C`, semantics are `0..T` and the last
//! semantic `T-1` is the background, which every image contains.

use crate::error::{invalid, Error, Result};
use crate::math;
use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// A `side × side × 3` image with nonnegative pixel values.
///
/// Storage is row-major with interleaved channels: pixel `(row, col)` channel
/// `ch` lives at `(row * side + col) * 3 + ch`. The flat buffer is also the
/// input vector seen by encoders.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    side: usize,
    data: Vec<f64>,
}

pub const CHANNELS: usize = 3;

impl AsRef<[f64]> for Image {
    fn as_ref(&self) -> &[f64] {
        &self.data
    }
}

impl Image {
    pub fn new(side: usize, data: Vec<f64>) -> Result<Self> {
        if side < 2 {
            return Err(invalid("image side must be at least 2"));
        }
        if data.len() != side * side * CHANNELS {
            return Err(Error::DimensionMismatch { expected: side * side * CHANNELS, found: data.len() });
        }
        if let Some(v) = data.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(invalid(alloc::format!("pixel value {v} is not a finite nonnegative number")));
        }
        Ok(Image { side, data })
    }

    /// Builds an image from `f(row, col, channel)`.
    pub fn from_fn(side: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(side * side * CHANNELS);
        for r in 0..side {
            for c in 0..side {
                for ch in 0..CHANNELS {
                    data.push(f(r, c, ch));
                }
            }
        }
        Image::new(side, data)
    }

    pub fn constant(side: usize, value: f64) -> Result<Self> {
        Image::new(side, vec![value; side * side * CHANNELS])
    }

    // Internal constructor for transforms that preserve the invariants.
    pub(crate) fn from_raw(side: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), side * side * CHANNELS);
        Image { side, data }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.data[(row * self.side + col) * CHANNELS + ch]
    }

    /// Flat pixel buffer (row, col, channel order).
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Frobenius norm of the pixel tensor.
    pub fn frobenius(&self) -> f64 {
        crate::linalg::norm(&self.data)
    }
}

/// Per-pixel semantic labels in `0..T`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticMap {
    side: usize,
    labels: Vec<u16>,
}

impl SemanticMap {
    pub fn new(side: usize, labels: Vec<u16>) -> Result<Self> {
        if labels.len() != side * side {
            return Err(Error::DimensionMismatch { expected: side * side, found: labels.len() });
        }
        Ok(SemanticMap { side, labels })
    }

    pub fn uniform(side: usize, label: u16) -> Self {
        SemanticMap { side, labels: vec![label; side * side] }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.labels[row * self.side + col]
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    /// Distinct labels present, ascending.
    pub fn present(&self) -> Vec<u16> {
        let mut v = self.labels.clone();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn is_uniform(&self) -> bool {
        self.labels.windows(2).all(|w| w[0] == w[1])
    }
}

/// Axis-aligned pixel rectangle `[row0, row0+rows) × [col0, col0+cols)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub row0: usize,
    pub col0: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Rect {
    pub fn area(&self) -> usize {
        self.rows * self.cols
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        row >= self.row0 && row < self.row0 + self.rows && col >= self.col0 && col < self.col0 + self.cols
    }
}

/// One cell of the partition and the semantic it carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub label: u16,
    pub rect: Rect,
}

/// Per-channel mean and standard deviation of one semantic's pixel law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemanticStats {
    pub mean: [f64; CHANNELS],
    pub std: [f64; CHANNELS],
}

/// Parameters of the generative process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerativeConfig {
    pub num_classes: usize,
    pub num_semantics: usize,
    pub side: usize,
    /// Class prior, length `num_classes`.
    pub class_prior: Vec<f64>,
    /// `semantic_prob[c][t] = P(semantic t active | class c)`.
    pub semantic_prob: Vec<Vec<f64>>,
    /// Pixel law per semantic.
    pub semantics: Vec<SemanticStats>,
}

impl GenerativeConfig {
    pub fn validate(&self) -> Result<()> {
        let (c, t) = (self.num_classes, self.num_semantics);
        if c == 0 || t == 0 {
            return Err(invalid("num_classes and num_semantics must be positive"));
        }
        if self.side < 2 {
            return Err(invalid("side must be at least 2"));
        }
        check_prior(&self.class_prior, c)?;
        if self.semantic_prob.len() != c {
            return Err(Error::DimensionMismatch { expected: c, found: self.semantic_prob.len() });
        }
        for (y, row) in self.semantic_prob.iter().enumerate() {
            if row.len() != t {
                return Err(Error::DimensionMismatch { expected: t, found: row.len() });
            }
            if row.iter().any(|q| !(0.0..=1.0).contains(q)) {
                return Err(invalid(alloc::format!("semantic_prob[{y}] has entries outside [0,1]")));
            }
            if row[t - 1] != 1.0 {
                return Err(invalid(alloc::format!("semantic_prob[{y}][{}] (background) must be 1", t - 1)));
            }
        }
        if self.semantics.len() != t {
            return Err(Error::DimensionMismatch { expected: t, found: self.semantics.len() });
        }
        for s in &self.semantics {
            if s.mean.iter().chain(&s.std).any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(invalid("semantic means and stds must be finite and nonnegative"));
            }
        }
        Ok(())
    }

    pub fn background(&self) -> usize {
        self.num_semantics - 1
    }
}

pub(crate) fn check_prior(prior: &[f64], len: usize) -> Result<()> {
    if prior.len() != len {
        return Err(Error::DimensionMismatch { expected: len, found: prior.len() });
    }
    if prior.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(invalid("probabilities must be nonnegative"));
    }
    let total: f64 = prior.iter().sum();
    if math::abs(total - 1.0) > 1e-12 {
        return Err(invalid(alloc::format!("probabilities sum to {total}, not 1")));
    }
    Ok(())
}

/// A generated image together with its latent labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticImage {
    pub image: Image,
    pub map: SemanticMap,
    pub class_label: usize,
    /// Partition cells in the order they were assigned.
    pub regions: Vec<Region>,
}

/// Draws one image of class `class`.
///
/// The random stream is consumed in a fixed order (one uniform per semantic,
/// the shuffle, the partition, then pixels row by row), so identical inputs
/// give bit-identical output.
pub fn sample_semantic_image<R: Rng + ?Sized>(
    config: &GenerativeConfig,
    class: usize,
    rng: &mut R,
) -> Result<SemanticImage> {
    config.validate()?;
    if class >= config.num_classes {
        return Err(invalid(alloc::format!("class {class} out of range for {} classes", config.num_classes)));
    }
    let side = config.side;

    let mut active: Vec<u16> = Vec::new();
    for (t, q) in config.semantic_prob[class].iter().enumerate() {
        let u: f64 = rng.random();
        if u < *q {
            active.push(t as u16);
        }
    }
    // Background has probability 1 and u < 1 always holds.
    debug_assert!(!active.is_empty());
    active.shuffle(rng);

    let rects = guillotine_partition(side, active.len(), rng);
    let mut labels = vec![0u16; side * side];
    let mut regions = Vec::with_capacity(rects.len());
    for (rect, &label) in rects.iter().zip(&active) {
        for r in rect.row0..rect.row0 + rect.rows {
            for c in rect.col0..rect.col0 + rect.cols {
                labels[r * side + c] = label;
            }
        }
        regions.push(Region { label, rect: *rect });
    }

    let mut data = Vec::with_capacity(side * side * CHANNELS);
    for &label in &labels {
        let stats = &config.semantics[label as usize];
        for ch in 0..CHANNELS {
            data.push(truncated_gaussian(stats.mean[ch], stats.std[ch], rng));
        }
    }

    Ok(SemanticImage {
        image: Image::from_raw(side, data),
        map: SemanticMap { side, labels },
        class_label: class,
        regions,
    })
}

/// Gaussian `N(mean, std²)` conditioned on being nonnegative (rejection).
pub fn truncated_gaussian<R: Rng + ?Sized>(mean: f64, std: f64, rng: &mut R) -> f64 {
    if std == 0.0 {
        return mean;
    }
    let normal = Normal::new(mean, std).expect("std is finite and positive");
    loop {
        let v = normal.sample(rng);
        if v >= 0.0 {
            return v;
        }
    }
}

/// Splits the `side × side` frame into up to `cells` rectangles by repeatedly
/// cutting the largest cell across its longer side. Returns fewer cells when
/// the frame cannot be split further.
pub fn guillotine_partition<R: Rng + ?Sized>(side: usize, cells: usize, rng: &mut R) -> Vec<Rect> {
    let mut out = vec![Rect { row0: 0, col0: 0, rows: side, cols: side }];
    while out.len() < cells {
        let Some(idx) = (0..out.len())
            .filter(|&i| out[i].rows >= 2 || out[i].cols >= 2)
            .max_by(|&a, &b| out[a].area().cmp(&out[b].area()).then(b.cmp(&a)))
        else {
            break;
        };
        let cell = out[idx];
        let coin: bool = rng.random();
        let split_rows = if cell.rows < 2 {
            false
        } else if cell.cols < 2 {
            true
        } else if cell.rows != cell.cols {
            cell.rows > cell.cols
        } else {
            coin
        };
        let len = if split_rows { cell.rows } else { cell.cols };
        let lo = (len / 4).max(1);
        let hi = ((3 * len) / 4).min(len - 1).max(lo);
        let u: f64 = rng.random();
        let cut = lo + (math::floor(u * (hi - lo + 1) as f64) as usize).min(hi - lo);
        let (a, b) = if split_rows {
            (Rect { rows: cut, ..cell }, Rect { row0: cell.row0 + cut, rows: cell.rows - cut, ..cell })
        } else {
            (Rect { cols: cut, ..cell }, Rect { col0: cell.col0 + cut, cols: cell.cols - cut, ..cell })
        };
        out[idx] = a;
        out.push(b);
    }
    out
}

/// `[d² Σ_i σ_s^(i)²]^{1/2}`: scale of the within-semantic noise of a `d×d` image.
pub fn analytic_sigma(config: &GenerativeConfig, semantic: usize, side: usize) -> f64 {
    let s = &config.semantics[semantic];
    let var: f64 = s.std.iter().map(|v| v * v).sum();
    side as f64 * math::sqrt(var)
}

/// Euclidean distance between the mean colour triples of two semantics.
pub fn analytic_delta_mu(config: &GenerativeConfig, s: usize, t: usize) -> f64 {
    let (a, b) = (&config.semantics[s].mean, &config.semantics[t].mean);
    math::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}
