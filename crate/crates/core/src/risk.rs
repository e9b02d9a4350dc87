//! Contrastive and supervised losses, risk estimators and collision statistics.

use crate::augment::{sample_augmentation, AugDistribution};
use crate::encoder::Embedder;
use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, mean_and_std_error, norm};
use crate::math;
use crate::pixel_model::{check_prior, sample_semantic_image, GenerativeConfig, Image};
use crate::seed::{rng_for, SimRng};
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossForm {
    /// `−log(e^{s⁺} / (e^{s⁺} + Σ e^{s_k}))`
    Softmax,
    /// `log(1 + Σ exp(s_k − s⁺))`
    Logistic,
}

/// One anchor, its positive, and `K ≥ 1` negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveTuple<T> {
    pub anchor: T,
    pub positive: T,
    pub negatives: Vec<T>,
}

impl<T> ContrastiveTuple<T> {
    pub fn k(&self) -> usize {
        self.negatives.len()
    }

    pub fn check(&self) -> Result<()> {
        if self.negatives.is_empty() {
            return Err(invalid("a contrastive tuple needs at least one negative"));
        }
        Ok(())
    }

    pub fn try_map<U>(&self, mut f: impl FnMut(&T) -> Result<U>) -> Result<ContrastiveTuple<U>> {
        Ok(ContrastiveTuple {
            anchor: f(&self.anchor)?,
            positive: f(&self.positive)?,
            negatives: self.negatives.iter().map(f).collect::<Result<_>>()?,
        })
    }
}

/// A Monte-Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let (value, std_error) = mean_and_std_error(xs);
        Estimate { value, std_error, n: xs.len() }
    }
}

/// InfoNCE from the positive score and the negative scores.
pub fn infonce_from_scores(s_pos: f64, s_neg: &[f64], form: LossForm) -> f64 {
    match form {
        LossForm::Softmax => math::log_sum_exp(core::iter::once(s_pos).chain(s_neg.iter().copied())) - s_pos,
        LossForm::Logistic => {
            // log(1 + Σ e^{m_k}) with m_k = s_k − s⁺, stabilized on max(0, m_k).
            let top = s_neg.iter().fold(0.0_f64, |m, s| m.max(s - s_pos));
            let sum: f64 = math::exp(-top) + s_neg.iter().map(|s| math::exp(s - s_pos - top)).sum::<f64>();
            top + math::ln(sum)
        }
    }
}

/// InfoNCE of embedded anchor `z`, positive `zp` and negatives.
pub fn infonce<T: AsRef<[f64]>>(z: &[f64], zp: &[f64], negatives: &[T], form: LossForm) -> Result<f64> {
    let d = z.len();
    for v in core::iter::once(zp).chain(negatives.iter().map(AsRef::as_ref)) {
        if v.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: v.len() });
        }
    }
    let s_neg: Vec<f64> = negatives.iter().map(|n| dot(z, n.as_ref())).collect();
    Ok(infonce_from_scores(dot(z, zp), &s_neg, form))
}

fn tuple_loss<T: AsRef<[f64]>>(t: &ContrastiveTuple<T>, f: &dyn Embedder) -> Result<f64> {
    t.check()?;
    let e = t.try_map(|x| f.embed_slice(x.as_ref()))?;
    infonce(&e.anchor, &e.positive, &e.negatives, LossForm::Logistic)
}

/// Mean InfoNCE over a fixed sample of tuples.
pub fn empirical_unsup_risk<T: AsRef<[f64]>>(s: &[ContrastiveTuple<T>], f: &dyn Embedder) -> Result<f64> {
    if s.is_empty() {
        return Err(Error::Empty("tuple sample"));
    }
    let mut total = 0.0;
    for t in s {
        total += tuple_loss(t, f)?;
    }
    Ok(total / s.len() as f64)
}

/// Draws an index from a probability vector.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// A data-generation process that yields contrastive tuples.
pub trait TupleSource {
    fn num_classes(&self) -> usize;

    /// Draws `c, {c_k} ∼ π^{K+1}`, then `x̄ ∼ ρ_c`, `x̄_k ∼ ρ_{c_k}`, then
    /// `a, a', a_k ∼ P_A`, in that order.
    fn sample_tuple(&self, k: usize, rng: &mut SimRng) -> Result<ContrastiveTuple<Image>>;
}

/// Tuples from the semantic-image generative model.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerativeSource {
    pub config: GenerativeConfig,
    pub aug: AugDistribution,
}

impl GenerativeSource {
    pub fn new(config: GenerativeConfig, aug: AugDistribution) -> Result<Self> {
        config.validate()?;
        aug.validate()?;
        Ok(GenerativeSource { config, aug })
    }
}

impl TupleSource for GenerativeSource {
    fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    fn sample_tuple(&self, k: usize, rng: &mut SimRng) -> Result<ContrastiveTuple<Image>> {
        let prior = &self.config.class_prior;
        let c = sample_categorical(prior, rng);
        let neg_classes: Vec<usize> = (0..k).map(|_| sample_categorical(prior, rng)).collect();
        let x = sample_semantic_image(&self.config, c, rng)?.image;
        let negs = neg_classes
            .iter()
            .map(|&ck| Ok(sample_semantic_image(&self.config, ck, rng)?.image))
            .collect::<Result<Vec<_>>>()?;
        let a = sample_augmentation(&self.aug, rng);
        let ap = sample_augmentation(&self.aug, rng);
        Ok(ContrastiveTuple {
            anchor: a.apply(&x),
            positive: ap.apply(&x),
            negatives: negs.iter().map(|xk| sample_augmentation(&self.aug, rng).apply(xk)).collect(),
        })
    }
}

/// Tuples from a finite labeled image pool; `ρ_c` is uniform over class `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPool {
    prior: Vec<f64>,
    by_class: Vec<Vec<Image>>,
    aug: AugDistribution,
}

impl LabeledPool {
    pub fn new(labeled: &[(Image, usize)], prior: Vec<f64>, aug: AugDistribution) -> Result<Self> {
        check_prior(&prior, prior.len())?;
        aug.validate()?;
        let mut by_class = vec![Vec::new(); prior.len()];
        for (img, c) in labeled {
            by_class.get_mut(*c).ok_or(Error::MissingClass(*c))?.push(img.clone());
        }
        if let Some(c) = (0..prior.len()).find(|&c| prior[c] > 0.0 && by_class[c].is_empty()) {
            return Err(Error::MissingClass(c));
        }
        Ok(LabeledPool { prior, by_class, aug })
    }

    /// Pool with the empirical class frequencies as prior.
    pub fn with_empirical_prior(labeled: &[(Image, usize)], aug: AugDistribution) -> Result<Self> {
        let classes = labeled.iter().map(|(_, c)| c + 1).max().ok_or(Error::Empty("labeled pool"))?;
        let mut prior = vec![0.0; classes];
        for (_, c) in labeled {
            prior[*c] += 1.0 / labeled.len() as f64;
        }
        Self::new(labeled, prior, aug)
    }
}

impl TupleSource for LabeledPool {
    fn num_classes(&self) -> usize {
        self.prior.len()
    }

    fn sample_tuple(&self, k: usize, rng: &mut SimRng) -> Result<ContrastiveTuple<Image>> {
        let c = sample_categorical(&self.prior, rng);
        let neg_classes: Vec<usize> = (0..k).map(|_| sample_categorical(&self.prior, rng)).collect();
        let pick = |c: usize, rng: &mut SimRng| {
            let pool = &self.by_class[c];
            &pool[rng.random_range(0..pool.len())]
        };
        let x = pick(c, rng);
        let negs: Vec<&Image> = neg_classes.iter().map(|&ck| pick(ck, rng)).collect();
        let a = sample_augmentation(&self.aug, rng);
        let ap = sample_augmentation(&self.aug, rng);
        Ok(ContrastiveTuple {
            anchor: a.apply(x),
            positive: ap.apply(x),
            negatives: negs.iter().map(|xk| sample_augmentation(&self.aug, rng).apply(xk)).collect(),
        })
    }
}

/// Monte-Carlo estimate of the population InfoNCE risk over `n` fresh tuples.
pub fn population_unsup_risk_mc(
    source: &dyn TupleSource,
    f: &dyn Embedder,
    n: usize,
    k: usize,
    seed: u64,
) -> Result<Estimate> {
    if n == 0 || k == 0 {
        return Err(invalid("n and K must be positive"));
    }
    let losses = (0..n)
        .map(|i| tuple_loss(&source.sample_tuple(k, &mut rng_for(seed, i as u64))?, f))
        .collect::<Result<Vec<_>>>()?;
    Ok(Estimate::from_samples(&losses))
}

/// Rows are the class means `μ_c` of the embeddings of original images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanClassifier {
    pub means: Vec<Vec<f64>>,
}

impl MeanClassifier {
    pub fn from_embeddings(labeled: &[(Vec<f64>, usize)], num_classes: usize) -> Result<Self> {
        let dim = labeled.first().ok_or(Error::Empty("labeled set"))?.0.len();
        let mut sums = vec![vec![0.0; dim]; num_classes];
        let mut counts = vec![0usize; num_classes];
        for (z, c) in labeled {
            if z.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: z.len() });
            }
            let row = sums.get_mut(*c).ok_or_else(|| invalid("label outside 0..num_classes"))?;
            for (s, v) in row.iter_mut().zip(z) {
                *s += v;
            }
            counts[*c] += 1;
        }
        if let Some(c) = counts.iter().position(|&n| n == 0) {
            return Err(Error::MissingClass(c));
        }
        for (row, n) in sums.iter_mut().zip(&counts) {
            for s in row.iter_mut() {
                *s /= *n as f64;
            }
        }
        Ok(MeanClassifier { means: sums })
    }

    pub fn num_classes(&self) -> usize {
        self.means.len()
    }

    /// `log(1 + Σ_{c'≠c} exp(−z·(μ_c − μ_{c'})))`, over all other classes.
    pub fn loss(&self, z: &[f64], c: usize) -> f64 {
        let sc = dot(z, &self.means[c]);
        let scores: Vec<f64> = (0..self.means.len()).filter(|&j| j != c).map(|j| dot(z, &self.means[j])).collect();
        infonce_from_scores(sc, &scores, LossForm::Logistic)
    }

    /// Loss against the sampled negative classes; collisions contribute `e⁰`.
    pub fn sampled_loss(&self, z: &[f64], c: usize, neg_classes: &[usize]) -> f64 {
        let sc = dot(z, &self.means[c]);
        let scores: Vec<f64> = neg_classes.iter().map(|&j| if j == c { sc } else { dot(z, &self.means[j]) }).collect();
        infonce_from_scores(sc, &scores, LossForm::Logistic)
    }
}

fn embed_labeled(f: &dyn Embedder, labeled: &[(Image, usize)]) -> Result<Vec<(Vec<f64>, usize)>> {
    labeled.iter().map(|(img, c)| Ok((f.embed(img)?, *c))).collect()
}

/// Class means of `f` over original images; every class in `0..num_classes` must occur.
pub fn mean_classifier(f: &dyn Embedder, labeled: &[(Image, usize)], num_classes: usize) -> Result<MeanClassifier> {
    MeanClassifier::from_embeddings(&embed_labeled(f, labeled)?, num_classes)
}

/// Mean-classifier supervised risk summed over all other classes.
pub fn sup_risk(f: &dyn Embedder, w: &MeanClassifier, labeled: &[(Image, usize)]) -> Result<f64> {
    sup_risk_embeddings(w, &embed_labeled(f, labeled)?)
}

pub fn sup_risk_embeddings(w: &MeanClassifier, labeled: &[(Vec<f64>, usize)]) -> Result<f64> {
    if labeled.is_empty() {
        return Err(Error::Empty("labeled set"));
    }
    let mut total = 0.0;
    for (z, c) in labeled {
        if *c >= w.num_classes() {
            return Err(Error::MissingClass(*c));
        }
        total += w.loss(z, *c);
    }
    Ok(total / labeled.len() as f64)
}

/// Intermediate supervised risk: `K` negative classes drawn from `π`.
pub fn intermediate_sup_risk(
    f: &dyn Embedder,
    w: &MeanClassifier,
    prior: &[f64],
    k: usize,
    n_mc: usize,
    labeled: &[(Image, usize)],
    seed: u64,
) -> Result<Estimate> {
    intermediate_sup_risk_embeddings(w, prior, k, n_mc, &embed_labeled(f, labeled)?, seed)
}

pub fn intermediate_sup_risk_embeddings(
    w: &MeanClassifier,
    prior: &[f64],
    k: usize,
    n_mc: usize,
    labeled: &[(Vec<f64>, usize)],
    seed: u64,
) -> Result<Estimate> {
    sampled_class_risk(w, prior, k, n_mc, labeled, seed, false)
}

/// Supervised risk with `K` negative classes drawn from `π` given that none
/// equals the anchor class (rejection sampling).
pub fn conditional_sup_risk_embeddings(
    w: &MeanClassifier,
    prior: &[f64],
    k: usize,
    n_mc: usize,
    labeled: &[(Vec<f64>, usize)],
    seed: u64,
) -> Result<Estimate> {
    if tau_k(prior, k) >= 1.0 - 1e-12 {
        return Err(invalid("every negative tuple collides; the conditional risk is undefined"));
    }
    sampled_class_risk(w, prior, k, n_mc, labeled, seed, true)
}

fn sampled_class_risk(
    w: &MeanClassifier,
    prior: &[f64],
    k: usize,
    n_mc: usize,
    labeled: &[(Vec<f64>, usize)],
    seed: u64,
    distinct: bool,
) -> Result<Estimate> {
    check_prior(prior, w.num_classes())?;
    if n_mc == 0 || k == 0 {
        return Err(invalid("n_mc and K must be positive"));
    }
    let mut by_class: Vec<Vec<&[f64]>> = vec![Vec::new(); prior.len()];
    for (z, c) in labeled {
        by_class.get_mut(*c).ok_or(Error::MissingClass(*c))?.push(z);
    }
    if let Some(c) = (0..prior.len()).find(|&c| prior[c] > 0.0 && by_class[c].is_empty()) {
        return Err(Error::MissingClass(c));
    }
    let samples: Vec<f64> = (0..n_mc)
        .map(|i| {
            let mut rng = rng_for(seed, i as u64);
            let (c, negs) = loop {
                let c = sample_categorical(prior, &mut rng);
                let negs: Vec<usize> = (0..k).map(|_| sample_categorical(prior, &mut rng)).collect();
                if !distinct || negs.iter().all(|&j| j != c) {
                    break (c, negs);
                }
            };
            let pool = &by_class[c];
            let z = pool[rng.random_range(0..pool.len())];
            w.sampled_loss(z, c, &negs)
        })
        .collect();
    Ok(Estimate::from_samples(&samples))
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Probability that at least one of `K` negatives shares the anchor's class.
pub fn tau_k(prior: &[f64], k: usize) -> f64 {
    1.0 - prior.iter().map(|p| p * math::powi(1.0 - p, k as u32)).sum::<f64>()
}

/// `E log(Col + 1)` where `Col` counts negatives sharing the anchor's class.
pub fn col_term(prior: &[f64], k: usize) -> f64 {
    prior
        .iter()
        .map(|&p| {
            p * (1..=k)
                .map(|j| {
                    binomial(k, j)
                        * math::powi(p, j as u32)
                        * math::powi(1.0 - p, (k - j) as u32)
                        * math::ln((j + 1) as f64)
                })
                .sum::<f64>()
        })
        .sum()
}

/// Default bound on the loss for embeddings of norm at most `r`.
pub fn loss_bound(k: usize, r: f64) -> f64 {
    math::ln_1p(k as f64 * math::exp(2.0 * r * r))
}

/// Empirical Rademacher complexity of `{x ↦ Wx : ‖W‖_F ≤ w_max}` with `d_out` outputs.
///
/// For a sign draw the supremum is `w_max·‖M‖_F`, where row `t` of `M` is
/// `Σ_{j,k} (ε_{jkt1} x_j + ε_{jkt2} x'_j + ε_{jkt3} x_{jk})`.
pub fn rademacher_linear<T: AsRef<[f64]>>(
    s: &[ContrastiveTuple<T>],
    w_max: f64,
    d_out: usize,
    n_draws: usize,
    seed: u64,
) -> Result<Estimate> {
    let first = s.first().ok_or(Error::Empty("tuple sample"))?;
    if n_draws == 0 || d_out == 0 {
        return Err(invalid("n_draws and d_out must be positive"));
    }
    let dim = first.anchor.as_ref().len();
    for t in s {
        t.check()?;
        for v in core::iter::once(&t.anchor).chain(core::iter::once(&t.positive)).chain(&t.negatives) {
            if v.as_ref().len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: v.as_ref().len() });
            }
        }
    }
    let sign = |rng: &mut SimRng| if rng.random::<bool>() { 1.0 } else { -1.0 };
    let draws: Vec<f64> = (0..n_draws)
        .map(|i| {
            let mut rng = rng_for(seed, i as u64);
            let mut sq = 0.0;
            let mut row = vec![0.0; dim];
            for _ in 0..d_out {
                row.iter_mut().for_each(|r| *r = 0.0);
                for t in s {
                    for xk in &t.negatives {
                        let (e1, e2, e3) = (sign(&mut rng), sign(&mut rng), sign(&mut rng));
                        let (xa, xp, xn) = (t.anchor.as_ref(), t.positive.as_ref(), xk.as_ref());
                        for q in 0..dim {
                            row[q] += e1 * xa[q] + e2 * xp[q] + e3 * xn[q];
                        }
                    }
                }
                sq += dot(&row, &row);
            }
            w_max * math::sqrt(sq)
        })
        .collect();
    Ok(Estimate::from_samples(&draws))
}

/// Largest Euclidean norm among `vs`.
pub fn max_norm<T: AsRef<[f64]>>(vs: &[T]) -> f64 {
    vs.iter().map(|v| norm(v.as_ref())).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::Encoder;
    use crate::seed::rng_from;

    struct Constant(Vec<f64>);

    impl Embedder for Constant {
        fn output_dim(&self) -> usize {
            self.0.len()
        }
        fn embed_slice(&self, _: &[f64]) -> Result<Vec<f64>> {
            Ok(self.0.clone())
        }
    }

    fn unit(rng: &mut SimRng, d: usize) -> Vec<f64> {
        let v: Vec<f64> = (0..d).map(|_| rng.random::<f64>() - 0.5).collect();
        let n = norm(&v);
        v.iter().map(|x| x / n).collect()
    }

    #[test]
    fn infonce_examples() {
        let z = [1.0, 0.0];
        let negs = [[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]];
        for form in [LossForm::Softmax, LossForm::Logistic] {
            assert!((infonce(&z, &z, &negs, form).unwrap() - 4f64.ln()).abs() < 1e-15);
            let v = infonce(&z, &z, &[[-1.0, 0.0]], form).unwrap();
            assert!((v - (1.0 + (-2f64).exp()).ln()).abs() < 1e-15);
            assert!((v - 0.1269).abs() < 5e-5);
        }
        assert!(infonce(&z, &z, &[[1.0]], LossForm::Softmax).is_err());
    }

    #[test]
    fn forms_agree_on_random_unit_vectors() {
        let mut rng = rng_from(1);
        for _ in 0..100 {
            let (z, zp) = (unit(&mut rng, 5), unit(&mut rng, 5));
            let negs: Vec<Vec<f64>> = (0..4).map(|_| unit(&mut rng, 5)).collect();
            let a = infonce(&z, &zp, &negs, LossForm::Softmax).unwrap();
            let b = infonce(&z, &zp, &negs, LossForm::Logistic).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn empirical_risk_matches_hand_sum() {
        let f = Encoder::flatten_identity(2, false);
        let t = |a: [f64; 2], p: [f64; 2], n: [f64; 2]| ContrastiveTuple {
            anchor: a.to_vec(),
            positive: p.to_vec(),
            negatives: vec![n.to_vec()],
        };
        let s = vec![
            t([1.0, 0.0], [1.0, 0.0], [0.0, 1.0]),
            t([0.0, 1.0], [0.0, 1.0], [0.0, 1.0]),
            t([1.0, 0.0], [0.0, 1.0], [1.0, 0.0]),
        ];
        // Margins s_k − s⁺: −1, 0, +1.
        let hand = ((1.0 + (-1f64).exp()).ln() + 2f64.ln() + (1.0 + 1f64.exp()).ln()) / 3.0;
        assert!((empirical_unsup_risk(&s, &f).unwrap() - hand).abs() < 1e-15);
        let one = empirical_unsup_risk(&s[..1], &f).unwrap();
        let dup = empirical_unsup_risk(&[s[0].clone(), s[0].clone()], &f).unwrap();
        assert_eq!(one, dup);
        assert!(empirical_unsup_risk::<Vec<f64>>(&[], &f).is_err());
    }

    #[test]
    fn constant_encoder_population_risk_is_log_one_plus_k() {
        let cfg = crate::pixel_model::tests::two_class_config();
        let src = GenerativeSource::new(cfg, AugDistribution::default()).unwrap();
        let f = Constant(vec![0.6, 0.8]);
        let est = population_unsup_risk_mc(&src, &f, 20, 3, 5).unwrap();
        assert!((est.value - 4f64.ln()).abs() < 1e-15);
        assert_eq!(est.std_error, 0.0);
        let enc = Encoder::linear(192, 4, &mut rng_from(2));
        let a = population_unsup_risk_mc(&src, &enc, 10, 2, 8).unwrap();
        let b = population_unsup_risk_mc(&src, &enc, 10, 2, 8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mean_classifier_and_sup_risk() {
        let labeled = vec![
            (vec![1.0, 0.0], 0),
            (vec![0.0, 1.0], 0),
            (vec![0.0, -1.0], 1),
            (vec![-1.0, 0.0], 1),
            (vec![0.5, 0.5], 1),
        ];
        let w = MeanClassifier::from_embeddings(&labeled, 2).unwrap();
        assert_eq!(w.means[0], vec![0.5, 0.5]);
        let m1 = [(-1.0 + 0.5) / 3.0, (-1.0 + 0.5) / 3.0];
        assert!((w.means[1][0] - m1[0]).abs() < 1e-15 && (w.means[1][1] - m1[1]).abs() < 1e-15);
        assert_eq!(MeanClassifier::from_embeddings(&labeled, 3), Err(Error::MissingClass(2)));

        // f·(μ_0 − μ_1) = 2 for a class-0 sample.
        let w = MeanClassifier { means: vec![vec![1.0, 0.0], vec![-1.0, 0.0]] };
        let r = sup_risk_embeddings(&w, &[(vec![1.0, 0.0], 0)]).unwrap();
        assert!((r - (1.0 + (-2f64).exp()).ln()).abs() < 1e-15);
        let eq = MeanClassifier { means: vec![vec![0.3, 0.1]; 4] };
        assert!((sup_risk_embeddings(&eq, &[(vec![1.0, 0.0], 2)]).unwrap() - 4f64.ln()).abs() < 1e-15);
        let single = MeanClassifier { means: vec![vec![0.3, 0.1]] };
        assert_eq!(sup_risk_embeddings(&single, &[(vec![1.0, 0.0], 0)]).unwrap(), 0.0);
    }

    #[test]
    fn intermediate_risk_examples() {
        let single = MeanClassifier { means: vec![vec![0.3, 0.1]] };
        let data = vec![(vec![1.0, 0.0], 0)];
        let e = intermediate_sup_risk_embeddings(&single, &[1.0], 3, 50, &data, 1).unwrap();
        assert!((e.value - 4f64.ln()).abs() < 1e-15);

        // C=2, K=1, uniform: enumerate (c, c_1) against the long-run MC average.
        let w = MeanClassifier { means: vec![vec![1.0, 0.0], vec![0.0, 1.0]] };
        let data = vec![(vec![1.0, 0.0], 0), (vec![0.0, 1.0], 1)];
        let mut exact = 0.0;
        for c in 0..2 {
            for c1 in 0..2 {
                let gap: f64 = if c == c1 { 0.0 } else { 1.0 };
                exact += 0.25 * (1.0 + (-gap).exp()).ln();
            }
        }
        let e = intermediate_sup_risk_embeddings(&w, &[0.5, 0.5], 1, 20_000, &data, 7).unwrap();
        assert!((e.value - exact).abs() < 4.0 * e.std_error, "{e:?} vs {exact}");
    }

    #[test]
    fn collision_examples() {
        assert_eq!(tau_k(&[1.0], 4), 1.0);
        assert!((col_term(&[1.0], 4) - 5f64.ln()).abs() < 1e-15);
        assert_eq!(tau_k(&[1.0, 0.0, 0.0], 4), 1.0);
        assert!((col_term(&[1.0, 0.0, 0.0], 4) - 5f64.ln()).abs() < 1e-15);
        assert!((tau_k(&[0.5, 0.5], 1) - 0.5).abs() < 1e-15);
        assert!((col_term(&[0.5, 0.5], 1) - 0.5 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn rademacher_examples() {
        let zero =
            vec![ContrastiveTuple { anchor: vec![0.0; 3], positive: vec![0.0; 3], negatives: vec![vec![0.0; 3]] }];
        assert_eq!(rademacher_linear(&zero, 2.0, 2, 10, 0).unwrap().value, 0.0);

        let s = vec![ContrastiveTuple {
            anchor: vec![1.0, 0.0],
            positive: vec![0.5, 0.5],
            negatives: vec![vec![-0.2, 1.0]],
        }];
        let mut exact = 0.0;
        for bits in 0..8 {
            let e: Vec<f64> = (0..3).map(|i| if bits >> i & 1 == 1 { 1.0 } else { -1.0 }).collect();
            let v: Vec<f64> =
                (0..2).map(|q| e[0] * s[0].anchor[q] + e[1] * s[0].positive[q] + e[2] * s[0].negatives[0][q]).collect();
            exact += norm(&v) / 8.0;
        }
        let est = rademacher_linear(&s, 1.0, 1, 20_000, 3).unwrap();
        assert!((est.value - exact).abs() < 4.0 * est.std_error);
        let twice = rademacher_linear(&s, 2.0, 1, 20_000, 3).unwrap();
        assert!((twice.value - 2.0 * est.value).abs() < 1e-12);
    }

    #[test]
    fn loss_bound_dominates_infonce() {
        let mut rng = rng_from(11);
        let b = loss_bound(4, 1.0);
        for _ in 0..200 {
            let z = unit(&mut rng, 3);
            let negs: Vec<Vec<f64>> = (0..4).map(|_| unit(&mut rng, 3)).collect();
            assert!(infonce(&z, &unit(&mut rng, 3), &negs, LossForm::Logistic).unwrap() <= b);
        }
    }

    #[test]
    fn conditional_risk_matches_enumeration() {
        let prior = [0.5, 0.3, 0.2];
        let zs = [vec![1.0, 0.0], vec![0.0, 1.0], vec![-0.6, 0.8]];
        let labeled: Vec<(Vec<f64>, usize)> = zs.iter().cloned().zip(0..3).collect();
        let w = MeanClassifier::from_embeddings(&labeled, 3).unwrap();
        let mut exact = 0.0;
        for c in 0..3 {
            for a in 0..3 {
                for b in 0..3 {
                    if a != c && b != c {
                        exact += prior[c] * prior[a] * prior[b] * w.sampled_loss(&zs[c], c, &[a, b]);
                    }
                }
            }
        }
        exact /= 1.0 - tau_k(&prior, 2);
        let est = conditional_sup_risk_embeddings(&w, &prior, 2, 40_000, &labeled, 5).unwrap();
        assert!((est.value - exact).abs() < 4.0 * est.std_error, "{} vs {exact}", est.value);

        let single = MeanClassifier::from_embeddings(&labeled[..1], 1).unwrap();
        assert!(conditional_sup_risk_embeddings(&single, &[1.0], 1, 10, &labeled[..1], 0).is_err());
    }
}
