//! Monte-Carlo estimators of the augmentation distance terms, the Lipschitz
//! constant and the centering residual.
//!
//! Distances are Frobenius at pixel level (`embed = None`) and Euclidean in
//! embedding space otherwise. Both go through [`linalg::distance`], so the
//! unnormalized flatten-identity encoder reproduces pixel distances bit for bit.
//!
//! Seeding is nested: candidate `j` always uses `derive(derive(seed, 1), j)`,
//! whatever the total count. Doubling `m_c` therefore adds candidates to the
//! same set, and the sampled min (max) can only go down (up).

use crate::augment::{sample_augmentation, AugDistribution, Augmentation};
use crate::encoder::Embedder;
use crate::error::{invalid, Error, Result};
use crate::linalg::{self, mean_and_std_error};
use crate::math;
use crate::pixel_model::Image;
use crate::seed::{derive_seed, rng_for};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceEstimate {
    pub value: f64,
    pub std_error: f64,
    pub anchors: usize,
    pub candidates: usize,
}

const ANCHOR_STREAM: u64 = 0;
const CANDIDATE_STREAM: u64 = 1;

fn represent(img: &Image, embed: Option<&dyn Embedder>) -> Result<Vec<f64>> {
    match embed {
        None => Ok(img.as_slice().to_vec()),
        Some(f) => f.embed(img),
    }
}

/// `count` sampled augmentations from the stream `derive(seed, stream)`.
fn sampled_views(
    x: &Image,
    dist: &AugDistribution,
    embed: Option<&dyn Embedder>,
    seed: u64,
    stream: u64,
    range: core::ops::Range<usize>,
) -> Result<Vec<Vec<f64>>> {
    let base = derive_seed(seed, stream);
    range.map(|j| represent(&sample_augmentation(dist, &mut rng_for(base, j as u64)).apply(x), embed)).collect()
}

/// `Id` followed by `count − 1` sampled candidate views.
fn candidate_views(
    x: &Image,
    dist: &AugDistribution,
    embed: Option<&dyn Embedder>,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let mut views = Vec::with_capacity(count);
    views.push(represent(&Augmentation::identity().apply(x), embed)?);
    views.extend(sampled_views(x, dist, embed, seed, CANDIDATE_STREAM, 1..count)?);
    Ok(views)
}

fn min_distance(v: &[f64], pool: &[Vec<f64>]) -> f64 {
    pool.iter().map(|w| linalg::distance(v, w)).fold(f64::INFINITY, f64::min)
}

fn max_pairwise(pool: &[Vec<f64>]) -> f64 {
    let mut best = 0.0_f64;
    for (i, a) in pool.iter().enumerate() {
        for b in &pool[i + 1..] {
            best = best.max(linalg::distance(a, b));
        }
    }
    best
}

/// `E_a min_{a'} ‖f(a(x̄)) − f(a'(x̄'))‖` over `m_a` anchors and `m_c` candidates
/// (the first candidate is always `Id`).
pub fn min_cross_image_distance(
    x: &Image,
    xp: &Image,
    dist: &AugDistribution,
    embed: Option<&dyn Embedder>,
    m_a: usize,
    m_c: usize,
    seed: u64,
) -> Result<DistanceEstimate> {
    if m_a == 0 || m_c == 0 {
        return Err(invalid("m_a and m_c must be positive"));
    }
    dist.validate()?;
    let candidates = candidate_views(xp, dist, embed, m_c, seed)?;
    let anchors = sampled_views(x, dist, embed, seed, ANCHOR_STREAM, 0..m_a)?;
    let mins: Vec<f64> = anchors.iter().map(|a| min_distance(a, &candidates)).collect();
    let (value, std_error) = mean_and_std_error(&mins);
    Ok(DistanceEstimate { value, std_error, anchors: m_a, candidates: m_c })
}

/// `max_{a,a'} ‖f(a(x̄)) − f(a'(x̄))‖` over `Id` and `m − 1` sampled views.
///
/// A single maximum carries no sampling spread, so `std_error` is 0.
pub fn max_same_image_distance(
    x: &Image,
    dist: &AugDistribution,
    embed: Option<&dyn Embedder>,
    m: usize,
    seed: u64,
) -> Result<DistanceEstimate> {
    if m < 2 {
        return Err(invalid("max_same_image_distance needs m >= 2"));
    }
    dist.validate()?;
    let views = candidate_views(x, dist, embed, m, seed)?;
    Ok(DistanceEstimate { value: max_pairwise(&views), std_error: 0.0, anchors: m, candidates: m })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistanceCounts {
    /// Anchor augmentations per image.
    pub anchors: usize,
    /// Candidate augmentations per image, `Id` included.
    pub candidates: usize,
    /// Cap on partner images per anchor image (cyclic successors); all if `None`.
    #[serde(default)]
    pub max_partners: Option<usize>,
    /// Views per image for the max term, taken as a prefix of the candidate
    /// pool; all candidates if `None`.
    #[serde(default)]
    pub max_views: Option<usize>,
}

impl DistanceCounts {
    pub fn new(anchors: usize, candidates: usize) -> Self {
        DistanceCounts { anchors, candidates, max_partners: None, max_views: None }
    }

    fn max_pool(&self) -> usize {
        self.max_views.unwrap_or(self.candidates)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDistanceTerms {
    pub min_term: DistanceEstimate,
    pub max_term: DistanceEstimate,
    /// Classes left out of the min term for having fewer than two images.
    pub skipped_classes: Vec<usize>,
}

// Averages per-class means and combines their standard errors.
fn class_average(per_class: &[(f64, f64)]) -> (f64, f64) {
    let n = per_class.len() as f64;
    let value = per_class.iter().map(|(v, _)| v).sum::<f64>() / n;
    let var = per_class.iter().map(|(_, s)| s * s).sum::<f64>();
    (value, math::sqrt(var) / n)
}

/// Class-averaged min cross-image and max same-image terms.
///
/// Every image `i` gets its own anchor and candidate pools seeded by
/// `derive(seed, i)`. For each class the min term averages the pair values
/// `E_a min_{a'}` over ordered pairs of distinct dataset elements; the max
/// term averages the per-image maximum over the candidate pool. Classes are
/// then weighted equally.
pub fn class_distance_terms(
    dataset: &[(Image, usize)],
    dist: &AugDistribution,
    embed: Option<&dyn Embedder>,
    counts: &DistanceCounts,
    seed: u64,
) -> Result<ClassDistanceTerms> {
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    if counts.anchors == 0 || counts.candidates < 2 {
        return Err(invalid("need anchors >= 1 and candidates >= 2"));
    }
    let m_max = counts.max_pool();
    if !(2..=counts.candidates).contains(&m_max) {
        return Err(invalid("max_views must lie in [2, candidates]"));
    }
    dist.validate()?;
    let num_classes = dataset.iter().map(|(_, c)| c + 1).max().unwrap_or(0);
    let mut members: Vec<Vec<usize>> = alloc::vec![Vec::new(); num_classes];
    for (i, (_, c)) in dataset.iter().enumerate() {
        members[*c].push(i);
    }

    let mut anchor_pools = Vec::with_capacity(dataset.len());
    let mut candidate_pools = Vec::with_capacity(dataset.len());
    for (i, (img, _)) in dataset.iter().enumerate() {
        let s = derive_seed(seed, i as u64);
        anchor_pools.push(sampled_views(img, dist, embed, s, ANCHOR_STREAM, 0..counts.anchors)?);
        candidate_pools.push(candidate_views(img, dist, embed, counts.candidates, s)?);
    }

    let mut min_per_class = Vec::new();
    let mut max_per_class = Vec::new();
    let mut skipped = Vec::new();
    for (c, idx) in members.iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        let maxes: Vec<f64> = idx.iter().map(|&i| max_pairwise(&candidate_pools[i][..m_max])).collect();
        max_per_class.push(mean_and_std_error(&maxes));
        if idx.len() < 2 {
            skipped.push(c);
            continue;
        }
        let partners = counts.max_partners.unwrap_or(idx.len() - 1).min(idx.len() - 1).max(1);
        let mut pair_values = Vec::with_capacity(idx.len() * partners);
        for (pos, &i) in idx.iter().enumerate() {
            for step in 1..=partners {
                let j = idx[(pos + step) % idx.len()];
                let mins: Vec<f64> = anchor_pools[i].iter().map(|a| min_distance(a, &candidate_pools[j])).collect();
                pair_values.push(mins.iter().sum::<f64>() / mins.len() as f64);
            }
        }
        min_per_class.push(mean_and_std_error(&pair_values));
    }
    if min_per_class.is_empty() {
        return Err(invalid("no class has two or more images"));
    }
    let (min_v, min_se) = class_average(&min_per_class);
    let (max_v, max_se) = class_average(&max_per_class);
    Ok(ClassDistanceTerms {
        min_term: DistanceEstimate {
            value: min_v,
            std_error: min_se,
            anchors: counts.anchors,
            candidates: counts.candidates,
        },
        max_term: DistanceEstimate { value: max_v, std_error: max_se, anchors: m_max, candidates: m_max },
        skipped_classes: skipped,
    })
}

/// Largest observed `‖f(x) − f(x')‖ / ‖x − x'‖`; pairs at distance 0 are skipped.
pub fn lipschitz_estimate(embed: &dyn Embedder, pairs: &[(Image, Image)]) -> Result<f64> {
    let mut best = 0.0_f64;
    for (x, y) in pairs {
        let dx = linalg::distance(x.as_slice(), y.as_slice());
        if dx > 0.0 {
            best = best.max(linalg::distance(&embed.embed(x)?, &embed.embed(y)?) / dx);
        }
    }
    Ok(best)
}

/// `‖(1/m) Σ f(a_i(x̄)) − f(x̄)‖` over `m` sampled augmentations.
pub fn centering_residual(embed: &dyn Embedder, x: &Image, dist: &AugDistribution, m: usize, seed: u64) -> Result<f64> {
    if m == 0 {
        return Err(invalid("m must be positive"));
    }
    dist.validate()?;
    let center = embed.embed(x)?;
    // Averaging offsets from f(x̄) keeps exact agreement at exactly zero.
    let mut offset = alloc::vec![0.0; center.len()];
    for i in 0..m {
        let z = embed.embed(&sample_augmentation(dist, &mut rng_for(seed, i as u64)).apply(x))?;
        for ((s, v), c) in offset.iter_mut().zip(&z).zip(&center) {
            *s += v - c;
        }
    }
    Ok(linalg::norm(&offset) / m as f64)
}
