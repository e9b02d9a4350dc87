//! Exhaustive small-world oracles: the pattern decomposition of the
//! unsupervised risk, the inner-risk bound and the intermediate-risk bound.
//!
//! Classes, images and augmentations are all finite here, so every
//! expectation is an exact weighted sum. Labels are 0-based.

use crate::augment::{sample_augmentation, AugDistribution, Augmentation};
use crate::encoder::Embedder;
use crate::error::{invalid, Error, Result};
use crate::linalg::{distance, dot, norm};
use crate::math;
use crate::pixel_model::{check_prior, Image};
use crate::risk::{col_term, infonce_from_scores, tau_k, LossForm, MeanClassifier};
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Largest number of enumerated terms any oracle may visit.
pub const ENUMERATION_LIMIT: u128 = 10_000_000;

fn guard(required: u128) -> Result<()> {
    if required > ENUMERATION_LIMIT {
        return Err(Error::Blowup { required, limit: ENUMERATION_LIMIT });
    }
    Ok(())
}

fn pow_u128(base: usize, exp: usize) -> u128 {
    (0..exp).fold(1u128, |acc, _| acc.saturating_mul(base as u128))
}

/// A finite instance: classes with weighted images and a weighted set of
/// augmentations containing the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteWorld {
    pub prior: Vec<f64>,
    pub images: Vec<Vec<Image>>,
    pub image_probs: Vec<Vec<f64>>,
    pub augmentations: Vec<Augmentation>,
    /// Strictly positive; the listed set is the support.
    pub aug_probs: Vec<f64>,
    pub k: usize,
}

impl DiscreteWorld {
    pub fn validate(&self) -> Result<()> {
        let c = self.prior.len();
        check_prior(&self.prior, c)?;
        if self.k == 0 {
            return Err(invalid("K must be positive"));
        }
        if self.images.len() != c || self.image_probs.len() != c {
            return Err(Error::DimensionMismatch { expected: c, found: self.images.len().min(self.image_probs.len()) });
        }
        for (cls, (imgs, probs)) in self.images.iter().zip(&self.image_probs).enumerate() {
            if imgs.is_empty() {
                return Err(Error::MissingClass(cls));
            }
            check_prior(probs, imgs.len())?;
        }
        let len = self.images[0][0].as_slice().len();
        if self.images.iter().flatten().any(|img| img.as_slice().len() != len) {
            return Err(invalid("all images must share one size"));
        }
        if self.augmentations.len() != self.aug_probs.len() {
            return Err(Error::DimensionMismatch { expected: self.augmentations.len(), found: self.aug_probs.len() });
        }
        check_prior(&self.aug_probs, self.augmentations.len())?;
        if self.aug_probs.iter().any(|p| *p <= 0.0) {
            return Err(invalid("augmentation probabilities must be positive"));
        }
        if !self.augmentations.iter().any(Augmentation::is_identity) {
            return Err(invalid("the augmentation set must contain the identity"));
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.prior.len()
    }

    /// Terms visited by the direct enumeration of the unsupervised risk.
    pub fn enumeration_size(&self) -> u128 {
        let imgs: usize = self.images.iter().map(Vec::len).sum();
        let a = self.augmentations.len();
        let anchors = (imgs * a * a) as u128;
        anchors.saturating_mul(pow_u128(imgs * a, self.k))
    }

    /// Random world with uniform-noise images of side `side`, the identity
    /// plus `num_augs − 1` draws from the default augmentation distribution,
    /// and random positive weights everywhere.
    pub fn random<R: Rng + ?Sized>(
        classes: usize,
        images_per_class: usize,
        num_augs: usize,
        k: usize,
        side: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if classes == 0 || images_per_class == 0 || num_augs == 0 {
            return Err(invalid("world sizes must be positive"));
        }
        let weights = |n: usize, rng: &mut R| {
            let w: Vec<f64> = (0..n).map(|_| 0.1 + rng.random::<f64>()).collect();
            let s: f64 = w.iter().sum();
            w.iter().map(|x| x / s).collect::<Vec<f64>>()
        };
        let prior = weights(classes, rng);
        let mut images = Vec::with_capacity(classes);
        let mut image_probs = Vec::with_capacity(classes);
        for _ in 0..classes {
            images.push(
                (0..images_per_class)
                    .map(|_| Image::from_fn(side, |_, _, _| rng.random::<f64>()))
                    .collect::<Result<Vec<_>>>()?,
            );
            image_probs.push(weights(images_per_class, rng));
        }
        let dist = AugDistribution::default();
        let mut augmentations = vec![Augmentation::identity()];
        augmentations.extend((1..num_augs).map(|_| sample_augmentation(&dist, rng)));
        let aug_probs = weights(num_augs, rng);
        let world = DiscreteWorld { prior, images, image_probs, augmentations, aug_probs, k };
        world.validate()?;
        Ok(world)
    }

    /// Embeds every augmented image once.
    pub fn embed<'w>(&'w self, f: &dyn Embedder) -> Result<EmbeddedWorld<'w>> {
        self.validate()?;
        guard(self.enumeration_size())?;
        let mut emb = Vec::with_capacity(self.images.len());
        let mut orig = Vec::with_capacity(self.images.len());
        for imgs in &self.images {
            let mut per_img = Vec::with_capacity(imgs.len());
            let mut per_orig = Vec::with_capacity(imgs.len());
            for img in imgs {
                per_img.push(self.augmentations.iter().map(|a| f.embed(&a.apply(img))).collect::<Result<Vec<_>>>()?);
                per_orig.push(f.embed(img)?);
            }
            emb.push(per_img);
            orig.push(per_orig);
        }
        let dim = f.output_dim();
        let mut means = vec![vec![0.0; dim]; self.images.len()];
        for (c, mean) in means.iter_mut().enumerate() {
            for (z, p) in orig[c].iter().zip(&self.image_probs[c]) {
                for (m, v) in mean.iter_mut().zip(z) {
                    *m += p * v;
                }
            }
        }
        Ok(EmbeddedWorld { world: self, emb, orig, means: MeanClassifier { means } })
    }
}

/// A multiset of `k` off-class labels and the number of ordered `K`-tuples
/// of negative classes that realize it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pattern {
    pub labels: Vec<usize>,
    pub multiplicity: u64,
}

impl Pattern {
    pub fn k(&self) -> usize {
        self.labels.len()
    }
}

fn factorial(n: usize) -> u64 {
    (1..=n as u64).product()
}

/// All multisets of labels other than `c` of size `0..=K`, sorted by size.
pub fn enumerate_patterns(num_classes: usize, c: usize, k: usize) -> Result<Vec<Pattern>> {
    if num_classes == 0 || k == 0 || c >= num_classes {
        return Err(invalid("need C >= 1, K >= 1 and c < C"));
    }
    guard(pow_u128(num_classes, k))?;
    let others: Vec<usize> = (0..num_classes).filter(|&j| j != c).collect();
    let mut out = Vec::new();
    for size in 0..=k {
        // Nondecreasing index sequences into `others`.
        let mut idx = vec![0usize; size];
        loop {
            if size == 0 || !others.is_empty() {
                let labels: Vec<usize> = idx.iter().map(|&i| others[i]).collect();
                let mut denom = factorial(k - size);
                let mut run = 1;
                for w in 1..=labels.len() {
                    if w < labels.len() && labels[w] == labels[w - 1] {
                        run += 1;
                    } else {
                        denom *= factorial(run);
                        run = 1;
                    }
                }
                out.push(Pattern { labels, multiplicity: factorial(k) / denom });
            }
            if size == 0 || others.is_empty() {
                break;
            }
            // Advance to the next nondecreasing sequence.
            let mut pos = size;
            while pos > 0 && idx[pos - 1] == others.len() - 1 {
                pos -= 1;
            }
            if pos == 0 {
                break;
            }
            idx[pos - 1] += 1;
            let v = idx[pos - 1];
            for slot in idx.iter_mut().skip(pos) {
                *slot = v;
            }
        }
    }
    Ok(out)
}

/// Probability that the `K` negative classes realize `pattern` around anchor class `c`.
pub fn p_k(prior: &[f64], c: usize, k: usize, pattern: &Pattern) -> f64 {
    let mut p = pattern.multiplicity as f64;
    for &i in &pattern.labels {
        p *= prior[i];
    }
    p * math::powi(prior[c], (k - pattern.k()) as u32)
}

/// `log(1 + (K−k) + Σ_m exp(−z·(μ_c − μ_{i_m})))`.
pub fn r_k_sup(z: &[f64], c: usize, pattern: &Pattern, w: &MeanClassifier, k: usize) -> f64 {
    let sc = dot(z, &w.means[c]);
    let scores: Vec<f64> =
        (0..k - pattern.k()).map(|_| sc).chain(pattern.labels.iter().map(|&i| dot(z, &w.means[i]))).collect();
    infonce_from_scores(sc, &scores, LossForm::Logistic)
}

// Σ over one choice per slot of Π weights · visit(scores).
fn sum_over_slots(slots: &[Vec<(f64, f64)>], mut term: impl FnMut(&[f64]) -> f64) -> f64 {
    if slots.iter().any(Vec::is_empty) {
        return 0.0;
    }
    let n = slots.len();
    let mut idx = vec![0usize; n];
    let mut scores = vec![0.0; n];
    let mut total = 0.0;
    loop {
        let mut w = 1.0;
        for (s, (&i, slot)) in idx.iter().zip(slots).enumerate() {
            w *= slot[i].0;
            scores[s] = slot[i].1;
        }
        total += w * term(&scores);
        let mut pos = 0;
        loop {
            if pos == n {
                return total;
            }
            idx[pos] += 1;
            if idx[pos] < slots[pos].len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// A world with all embeddings precomputed and the population class means.
#[derive(Debug, Clone)]
pub struct EmbeddedWorld<'w> {
    world: &'w DiscreteWorld,
    /// `emb[c][i][a] = f(a(x̄_{c,i}))`
    emb: Vec<Vec<Vec<Vec<f64>>>>,
    /// `orig[c][i] = f(x̄_{c,i})`
    orig: Vec<Vec<Vec<f64>>>,
    means: MeanClassifier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternEntry {
    pub class: usize,
    pub pattern: Pattern,
    pub p: f64,
    /// `E_{x̄∼ρ_c} E_a r_k(pattern)`
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub entries: Vec<PatternEntry>,
    /// `Σ_c π_c Σ_patterns p_k r_k`
    pub reconstructed: f64,
    /// Unsupervised risk by direct enumeration of all negatives.
    pub direct: f64,
    pub gap: f64,
    /// Per anchor class, `Σ_patterns p_k`.
    pub probability_totals: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

impl BoundCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        BoundCheck { lhs, rhs, slack: lhs - rhs }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerBoundSummary {
    pub checks: usize,
    pub worst: BoundCheck,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbarCheck {
    pub rbar_sup: f64,
    pub r_un: f64,
    pub min_term: f64,
    pub max_term: f64,
    pub rhs: f64,
    /// `rhs − rbar_sup`
    pub slack: f64,
}

/// Both sides of the collision relation, under two readings of the
/// supervised risk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurlRelation {
    pub rbar_sup: f64,
    pub tau: f64,
    pub col_term: f64,
    /// Negative classes sampled from `π` given no collision; `None` when `τ = 1`.
    pub r_sup_conditional: Option<f64>,
    /// Sum over all `C − 1` other classes.
    pub r_sup_all: f64,
    pub gap_conditional: Option<f64>,
    pub gap_all: f64,
}

impl EmbeddedWorld<'_> {
    pub fn world(&self) -> &DiscreteWorld {
        self.world
    }

    pub fn mean_classifier(&self) -> &MeanClassifier {
        &self.means
    }

    pub fn embedding(&self, c: usize, i: usize, a: usize) -> &[f64] {
        &self.emb[c][i][a]
    }

    pub fn original(&self, c: usize, i: usize) -> &[f64] {
        &self.orig[c][i]
    }

    /// Fails unless every embedding has unit norm within `1e-9`.
    pub fn require_unit_norm(&self) -> Result<()> {
        let all = self.emb.iter().flatten().flatten().chain(self.orig.iter().flatten());
        for z in all {
            let n = norm(z);
            if (n - 1.0).abs() > 1e-9 {
                return Err(Error::NotUnitNorm { norm: n });
            }
        }
        Ok(())
    }

    // (weight, z·f(a_k(x̄_k))) over images and augmentations of `class`.
    fn class_slot(&self, z: &[f64], class: usize) -> Vec<(f64, f64)> {
        let w = self.world;
        let mut slot = Vec::new();
        for (i, pi) in w.image_probs[class].iter().enumerate() {
            for (a, pa) in w.aug_probs.iter().enumerate() {
                slot.push((pi * pa, dot(z, &self.emb[class][i][a])));
            }
        }
        slot
    }

    fn positive_scores(&self, c: usize, i: usize, z: &[f64]) -> Vec<(f64, f64)> {
        self.world.aug_probs.iter().enumerate().map(|(a, p)| (*p, dot(z, &self.emb[c][i][a]))).collect()
    }

    fn expected_loss(&self, c: usize, i: usize, a: usize, slots: &[Vec<(f64, f64)>]) -> f64 {
        let z = &self.emb[c][i][a];
        self.positive_scores(c, i, z)
            .iter()
            .map(|(pp, sp)| pp * sum_over_slots(slots, |s| infonce_from_scores(*sp, s, LossForm::Logistic)))
            .sum()
    }

    /// Exact inner risk for anchor image `i` of class `c` under augmentation
    /// `a`: `k` negatives from the pattern classes, `K − k` from class `c`.
    pub fn r_k(&self, c: usize, i: usize, a: usize, pattern: &Pattern) -> f64 {
        let z = &self.emb[c][i][a];
        let same = self.class_slot(z, c);
        let slots: Vec<Vec<(f64, f64)>> = pattern
            .labels
            .iter()
            .map(|&j| self.class_slot(z, j))
            .chain((pattern.k()..self.world.k).map(|_| same.clone()))
            .collect();
        self.expected_loss(c, i, a, &slots)
    }

    /// Unsupervised risk with every negative drawn from the full mixture
    /// `π_{c'}·ρ_{c'}(i')·P(a_k)`, without any grouping by class pattern.
    pub fn r_un_direct(&self) -> f64 {
        let w = self.world;
        let mut total = 0.0;
        for (c, pc) in w.prior.iter().enumerate() {
            for (i, pi) in w.image_probs[c].iter().enumerate() {
                for (a, pa) in w.aug_probs.iter().enumerate() {
                    let z = &self.emb[c][i][a];
                    let mut pool = Vec::new();
                    for (c2, p2) in w.prior.iter().enumerate() {
                        pool.extend(self.class_slot(z, c2).into_iter().map(|(q, s)| (p2 * q, s)));
                    }
                    let slots = vec![pool; w.k];
                    total += pc * pi * pa * self.expected_loss(c, i, a, &slots);
                }
            }
        }
        total
    }

    pub fn decomposition_report(&self) -> Result<DecompositionReport> {
        let w = self.world;
        let mut entries = Vec::new();
        let mut totals = Vec::with_capacity(w.num_classes());
        let mut reconstructed = 0.0;
        for (c, pc) in w.prior.iter().enumerate() {
            let mut total = 0.0;
            for pattern in enumerate_patterns(w.num_classes(), c, w.k)? {
                let p = p_k(&w.prior, c, w.k, &pattern);
                total += p;
                let mut r = 0.0;
                for (i, pi) in w.image_probs[c].iter().enumerate() {
                    for (a, pa) in w.aug_probs.iter().enumerate() {
                        r += pi * pa * self.r_k(c, i, a, &pattern);
                    }
                }
                reconstructed += pc * p * r;
                entries.push(PatternEntry { class: c, pattern, p, r });
            }
            totals.push(total);
        }
        let direct = self.r_un_direct();
        Ok(DecompositionReport {
            entries,
            reconstructed,
            direct,
            gap: (reconstructed - direct).abs(),
            probability_totals: totals,
        })
    }

    /// `max_{a,a'} ‖f(a(x̄)) − f(a'(x̄))‖` over the whole augmentation set.
    pub fn max_same(&self, c: usize, i: usize) -> f64 {
        let views = &self.emb[c][i];
        let mut best = 0.0_f64;
        for (j, u) in views.iter().enumerate() {
            for v in &views[j + 1..] {
                best = best.max(distance(u, v));
            }
        }
        best
    }

    /// `E_{x̄∼ρ_c} max_{a,a'} ‖·‖`
    pub fn class_max_same(&self, c: usize) -> f64 {
        self.world.image_probs[c].iter().enumerate().map(|(i, p)| p * self.max_same(c, i)).sum()
    }

    /// `E_{x̄'∼ρ_c} E_{a'} min_{a''} ‖f(a'(x̄)) − f(a''(x̄'))‖` for anchor image `i`.
    pub fn min_cross(&self, c: usize, i: usize) -> f64 {
        let w = self.world;
        let mut total = 0.0;
        for (j, pj) in w.image_probs[c].iter().enumerate() {
            for (a, pa) in w.aug_probs.iter().enumerate() {
                let u = &self.emb[c][i][a];
                let m = self.emb[c][j].iter().map(|v| distance(u, v)).fold(f64::INFINITY, f64::min);
                total += pj * pa * m;
            }
        }
        total
    }

    /// `E_c E_{x̄∼ρ_c} (min cross-image term)`
    pub fn min_term(&self) -> f64 {
        let w = self.world;
        (0..w.num_classes())
            .map(|c| {
                w.prior[c] * w.image_probs[c].iter().enumerate().map(|(i, p)| p * self.min_cross(c, i)).sum::<f64>()
            })
            .sum()
    }

    /// `E_c E_{x̄∼ρ_c} max_{a,a'} ‖·‖`
    pub fn max_term(&self) -> f64 {
        (0..self.world.num_classes()).map(|c| self.world.prior[c] * self.class_max_same(c)).sum()
    }

    /// Inner-risk bound for one anchor and pattern. The pattern-class spread
    /// enters as the largest `E_{x̄_m∼ρ_{i_m}} max` over the pattern's
    /// classes (0 for the empty pattern).
    pub fn inner_risk_bound(&self, c: usize, i: usize, a: usize, pattern: &Pattern) -> Result<BoundCheck> {
        self.require_unit_norm()?;
        let lhs = self.r_k(c, i, a, pattern);
        let sup = r_k_sup(&self.orig[c][i], c, pattern, &self.means, self.world.k);
        let off = pattern.labels.iter().map(|&m| self.class_max_same(m)).fold(0.0, f64::max);
        let penalty = 2.0 * distance(&self.emb[c][i][a], &self.orig[c][i])
            + 2.0 * self.class_max_same(c)
            + off
            + self.min_cross(c, i);
        Ok(BoundCheck::new(lhs, sup - penalty))
    }

    /// Checks the inner-risk bound for every anchor, augmentation and pattern
    /// and returns the smallest slack.
    pub fn inner_risk_bound_all(&self) -> Result<InnerBoundSummary> {
        let w = self.world;
        let mut worst: Option<BoundCheck> = None;
        let mut checks = 0;
        for c in 0..w.num_classes() {
            let patterns = enumerate_patterns(w.num_classes(), c, w.k)?;
            for i in 0..w.images[c].len() {
                for a in 0..w.augmentations.len() {
                    for pattern in &patterns {
                        let check = self.inner_risk_bound(c, i, a, pattern)?;
                        checks += 1;
                        if worst.is_none_or(|b| check.slack < b.slack) {
                            worst = Some(check);
                        }
                    }
                }
            }
        }
        Ok(InnerBoundSummary { checks, worst: worst.ok_or(Error::Empty("world"))? })
    }

    // Σ_c π_c Σ_i ρ Σ_{ordered class tuples accepted by `keep`} Π π · loss.
    fn sampled_class_risk(&self, keep: impl Fn(usize, &[usize]) -> bool) -> f64 {
        let w = self.world;
        let cc = w.num_classes();
        let mut total = 0.0;
        for (c, pc) in w.prior.iter().enumerate() {
            for (i, pi) in w.image_probs[c].iter().enumerate() {
                let z = &self.orig[c][i];
                let mut tuple = vec![0usize; w.k];
                loop {
                    if keep(c, &tuple) {
                        let pt: f64 = tuple.iter().map(|&j| w.prior[j]).product();
                        total += pc * pi * pt * self.means.sampled_loss(z, c, &tuple);
                    }
                    let mut pos = 0;
                    while pos < w.k {
                        tuple[pos] += 1;
                        if tuple[pos] < cc {
                            break;
                        }
                        tuple[pos] = 0;
                        pos += 1;
                    }
                    if pos == w.k {
                        break;
                    }
                }
            }
        }
        total
    }

    /// Intermediate supervised risk by enumeration of all `C^K` class tuples.
    pub fn rbar_sup(&self) -> f64 {
        self.sampled_class_risk(|_, _| true)
    }

    pub fn rbar_bound(&self) -> Result<RbarCheck> {
        self.require_unit_norm()?;
        let rbar_sup = self.rbar_sup();
        let r_un = self.r_un_direct();
        let (min_term, max_term) = (self.min_term(), self.max_term());
        let rhs = r_un + min_term + 5.0 * max_term;
        Ok(RbarCheck { rbar_sup, r_un, min_term, max_term, rhs, slack: rhs - rbar_sup })
    }

    /// Supervised risk given that no negative class equals the anchor class.
    pub fn r_sup_conditional(&self) -> Option<f64> {
        let tau = tau_k(&self.world.prior, self.world.k);
        if tau >= 1.0 - 1e-12 {
            return None;
        }
        Some(self.sampled_class_risk(|c, t| t.iter().all(|&j| j != c)) / (1.0 - tau))
    }

    /// Mean-classifier risk over all other classes, weighted by `π` and `ρ`.
    pub fn r_sup_all(&self) -> f64 {
        let w = self.world;
        let mut total = 0.0;
        for (c, pc) in w.prior.iter().enumerate() {
            for (i, pi) in w.image_probs[c].iter().enumerate() {
                total += pc * pi * self.means.loss(&self.orig[c][i], c);
            }
        }
        total
    }

    pub fn curl_relation(&self) -> CurlRelation {
        let (prior, k) = (&self.world.prior, self.world.k);
        let tau = tau_k(prior, k);
        let col = col_term(prior, k);
        let rbar_sup = self.rbar_sup();
        let cond = self.r_sup_conditional();
        let all = self.r_sup_all();
        CurlRelation {
            rbar_sup,
            tau,
            col_term: col,
            r_sup_conditional: cond,
            r_sup_all: all,
            gap_conditional: cond.map(|r| rbar_sup - ((1.0 - tau) * r + tau * col)),
            gap_all: rbar_sup - ((1.0 - tau) * all + tau * col),
        }
    }
}

/// Exact inner risk; see [`EmbeddedWorld::r_k`].
pub fn r_k_exhaustive(
    world: &DiscreteWorld,
    f: &dyn Embedder,
    c: usize,
    i: usize,
    a: usize,
    pattern: &Pattern,
) -> Result<f64> {
    Ok(world.embed(f)?.r_k(c, i, a, pattern))
}

pub fn decomposition_check(world: &DiscreteWorld, f: &dyn Embedder) -> Result<DecompositionReport> {
    world.embed(f)?.decomposition_report()
}

pub fn inner_risk_bound_check(
    world: &DiscreteWorld,
    f: &dyn Embedder,
    c: usize,
    i: usize,
    a: usize,
    pattern: &Pattern,
) -> Result<BoundCheck> {
    world.embed(f)?.inner_risk_bound(c, i, a, pattern)
}

pub fn rbar_bound_check(world: &DiscreteWorld, f: &dyn Embedder) -> Result<RbarCheck> {
    world.embed(f)?.rbar_bound()
}
