//! Toy encoders with unit-norm outputs and exact InfoNCE gradients.
//!
//! Three architectures are supported:
//!
//! * `FlattenIdentity`: `f(x) = x` (optionally normalized), no parameters.
//! * `Linear`: `f(x) = W x / ‖W x‖`.
//! * `Mlp1`: `f(x) = V tanh(U x + b) / ‖·‖`.
//!
//! When the pre-normalization output is zero the encoder returns the first
//! basis vector instead and bumps a diagnostic counter.

use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, norm};
use crate::math;
use crate::pixel_model::Image;
use crate::risk::{infonce_from_scores, ContrastiveTuple, LossForm, TupleSource};
use crate::seed::{derive_seed, rng_for, SimRng};
use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicUsize, Ordering};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Anything that maps an input vector to an embedding.
pub trait Embedder {
    fn output_dim(&self) -> usize;

    fn embed_slice(&self, x: &[f64]) -> Result<Vec<f64>>;

    fn embed(&self, img: &Image) -> Result<Vec<f64>> {
        self.embed_slice(img.as_slice())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    FlattenIdentity,
    Linear,
    Mlp1,
}

impl Architecture {
    pub fn tag(self) -> u8 {
        match self {
            Architecture::FlattenIdentity => 0,
            Architecture::Linear => 1,
            Architecture::Mlp1 => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Architecture::FlattenIdentity),
            1 => Some(Architecture::Linear),
            2 => Some(Architecture::Mlp1),
            _ => None,
        }
    }
}

#[derive(Debug)]
pub struct Encoder {
    arch: Architecture,
    input_dim: usize,
    hidden_dim: usize,
    output_dim: usize,
    normalize: bool,
    params: Vec<f64>,
    degenerate: AtomicUsize,
}

impl Clone for Encoder {
    fn clone(&self) -> Self {
        Encoder {
            arch: self.arch,
            input_dim: self.input_dim,
            hidden_dim: self.hidden_dim,
            output_dim: self.output_dim,
            normalize: self.normalize,
            params: self.params.clone(),
            degenerate: AtomicUsize::new(self.degenerate.load(Ordering::Relaxed)),
        }
    }
}

impl PartialEq for Encoder {
    fn eq(&self, other: &Self) -> bool {
        self.arch == other.arch
            && self.input_dim == other.input_dim
            && self.hidden_dim == other.hidden_dim
            && self.output_dim == other.output_dim
            && self.normalize == other.normalize
            && self.params == other.params
    }
}

fn param_count(arch: Architecture, input: usize, hidden: usize, output: usize) -> usize {
    match arch {
        Architecture::FlattenIdentity => 0,
        Architecture::Linear => output * input,
        Architecture::Mlp1 => hidden * input + hidden + output * hidden,
    }
}

// Forward intermediates for one input.
struct Trace {
    hidden: Vec<f64>,
    pre: Vec<f64>,
    pre_norm: f64,
    out: Vec<f64>,
    degenerate: bool,
}

impl Encoder {
    /// Reassembles an encoder from raw parts, e.g. a checkpoint.
    pub fn from_parts(
        arch: Architecture,
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        normalize: bool,
        params: Vec<f64>,
    ) -> Result<Self> {
        if input_dim == 0 {
            return Err(invalid("input_dim must be positive"));
        }
        let (hidden_dim, output_dim) = match arch {
            Architecture::FlattenIdentity => (0, input_dim),
            Architecture::Linear => (0, output_dim),
            Architecture::Mlp1 => (hidden_dim, output_dim),
        };
        if output_dim == 0 || (arch == Architecture::Mlp1 && hidden_dim == 0) {
            return Err(invalid("layer widths must be positive"));
        }
        let expected = param_count(arch, input_dim, hidden_dim, output_dim);
        if params.len() != expected {
            return Err(Error::DimensionMismatch { expected, found: params.len() });
        }
        Ok(Encoder { arch, input_dim, hidden_dim, output_dim, normalize, params, degenerate: AtomicUsize::new(0) })
    }

    pub fn flatten_identity(input_dim: usize, normalize: bool) -> Self {
        Self::from_parts(Architecture::FlattenIdentity, input_dim, 0, input_dim, normalize, Vec::new())
            .expect("valid dims")
    }

    /// Linear encoder with `N(0, 1/input_dim)` weights, unit-norm output.
    pub fn linear<R: Rng + ?Sized>(input_dim: usize, output_dim: usize, rng: &mut R) -> Self {
        let n = Normal::new(0.0, 1.0 / math::sqrt(input_dim as f64)).expect("positive std");
        let params = (0..output_dim * input_dim).map(|_| n.sample(rng)).collect();
        Self::from_parts(Architecture::Linear, input_dim, 0, output_dim, true, params).expect("valid dims")
    }

    /// One-hidden-layer tanh MLP, unit-norm output.
    pub fn mlp1<R: Rng + ?Sized>(input_dim: usize, hidden_dim: usize, output_dim: usize, rng: &mut R) -> Self {
        let n1 = Normal::new(0.0, 1.0 / math::sqrt(input_dim as f64)).expect("positive std");
        let n2 = Normal::new(0.0, 1.0 / math::sqrt(hidden_dim as f64)).expect("positive std");
        let mut params = Vec::with_capacity(param_count(Architecture::Mlp1, input_dim, hidden_dim, output_dim));
        params.extend((0..hidden_dim * input_dim).map(|_| n1.sample(rng)));
        params.extend((0..hidden_dim).map(|_| 0.0));
        params.extend((0..output_dim * hidden_dim).map(|_| n2.sample(rng)));
        Self::from_parts(Architecture::Mlp1, input_dim, hidden_dim, output_dim, true, params).expect("valid dims")
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn normalize(&self) -> bool {
        self.normalize
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// How many forward passes hit a zero pre-normalization vector.
    pub fn degenerate_count(&self) -> usize {
        self.degenerate.load(Ordering::Relaxed)
    }

    pub fn forward(&self, img: &Image) -> Result<Vec<f64>> {
        self.embed(img)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch { expected: self.input_dim, found: x.len() });
        }
        Ok(())
    }

    fn trace(&self, x: &[f64]) -> Trace {
        let (hidden, pre) = match self.arch {
            Architecture::FlattenIdentity => (Vec::new(), x.to_vec()),
            Architecture::Linear => {
                let w = &self.params;
                let pre =
                    (0..self.output_dim).map(|o| dot(&w[o * self.input_dim..(o + 1) * self.input_dim], x)).collect();
                (Vec::new(), pre)
            }
            Architecture::Mlp1 => {
                let (u, rest) = self.params.split_at(self.hidden_dim * self.input_dim);
                let (b, v) = rest.split_at(self.hidden_dim);
                let hidden: Vec<f64> = (0..self.hidden_dim)
                    .map(|h| math::tanh(dot(&u[h * self.input_dim..(h + 1) * self.input_dim], x) + b[h]))
                    .collect();
                let pre = (0..self.output_dim)
                    .map(|o| dot(&v[o * self.hidden_dim..(o + 1) * self.hidden_dim], &hidden))
                    .collect();
                (hidden, pre)
            }
        };
        if !self.normalize {
            return Trace { hidden, out: pre.clone(), pre, pre_norm: 1.0, degenerate: false };
        }
        let n = norm(&pre);
        if n > 0.0 && n.is_finite() {
            let out = pre.iter().map(|v| v / n).collect();
            Trace { hidden, pre, pre_norm: n, out, degenerate: false }
        } else {
            let mut out = vec![0.0; self.output_dim];
            out[0] = 1.0;
            Trace { hidden, pre, pre_norm: n, out, degenerate: true }
        }
    }

    // Accumulates `scale * d(out)/d(params)ᵀ g` into `grad`.
    fn backward(&self, x: &[f64], t: &Trace, g: &[f64], scale: f64, grad: &mut [f64]) {
        if t.degenerate || self.arch == Architecture::FlattenIdentity {
            return;
        }
        let g_pre: Vec<f64> = if self.normalize {
            let gy = dot(g, &t.out);
            g.iter().zip(&t.out).map(|(gi, yi)| scale * (gi - gy * yi) / t.pre_norm).collect()
        } else {
            g.iter().map(|gi| scale * gi).collect()
        };
        let _ = &t.pre;
        match self.arch {
            Architecture::FlattenIdentity => {}
            Architecture::Linear => {
                for (o, go) in g_pre.iter().enumerate() {
                    let row = &mut grad[o * self.input_dim..(o + 1) * self.input_dim];
                    for (gw, xi) in row.iter_mut().zip(x) {
                        *gw += go * xi;
                    }
                }
            }
            Architecture::Mlp1 => {
                let nu = self.hidden_dim * self.input_dim;
                let v = &self.params[nu + self.hidden_dim..];
                let mut g_hidden = vec![0.0; self.hidden_dim];
                {
                    let gv = &mut grad[nu + self.hidden_dim..];
                    for (o, go) in g_pre.iter().enumerate() {
                        for h in 0..self.hidden_dim {
                            gv[o * self.hidden_dim + h] += go * t.hidden[h];
                            g_hidden[h] += go * v[o * self.hidden_dim + h];
                        }
                    }
                }
                for h in 0..self.hidden_dim {
                    let ga = g_hidden[h] * (1.0 - t.hidden[h] * t.hidden[h]);
                    grad[nu + h] += ga;
                    let row = &mut grad[h * self.input_dim..(h + 1) * self.input_dim];
                    for (gw, xi) in row.iter_mut().zip(x) {
                        *gw += ga * xi;
                    }
                }
            }
        }
    }

    /// Mean logistic InfoNCE over `batch` and its exact parameter gradient,
    /// including the Jacobian of the output normalization.
    pub fn infonce_gradient<T: AsRef<[f64]>>(&self, batch: &[ContrastiveTuple<T>]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let mut grad = vec![0.0; self.params.len()];
        let mut total = 0.0;
        let inv = 1.0 / batch.len() as f64;
        for tuple in batch {
            tuple.check()?;
            let xa = tuple.anchor.as_ref();
            let xp = tuple.positive.as_ref();
            self.check_input(xa)?;
            self.check_input(xp)?;
            for n in &tuple.negatives {
                self.check_input(n.as_ref())?;
            }
            let ta = self.trace(xa);
            let tp = self.trace(xp);
            let tn: Vec<Trace> = tuple.negatives.iter().map(|n| self.trace(n.as_ref())).collect();

            let s_pos = dot(&ta.out, &tp.out);
            let s_neg: Vec<f64> = tn.iter().map(|t| dot(&ta.out, &t.out)).collect();
            total += infonce_from_scores(s_pos, &s_neg, LossForm::Logistic);

            // Softmax weights of the negatives among [s_pos, s_neg...].
            let lse = math::log_sum_exp(core::iter::once(s_pos).chain(s_neg.iter().copied()));
            let w: Vec<f64> = s_neg.iter().map(|s| math::exp(s - lse)).collect();
            let w_sum: f64 = w.iter().sum();

            let d = self.output_dim;
            let mut g_a = vec![0.0; d];
            for (wk, t) in w.iter().zip(&tn) {
                for i in 0..d {
                    g_a[i] += wk * (t.out[i] - tp.out[i]);
                }
            }
            let g_p: Vec<f64> = ta.out.iter().map(|v| -w_sum * v).collect();
            self.backward(xa, &ta, &g_a, inv, &mut grad);
            self.backward(xp, &tp, &g_p, inv, &mut grad);
            for ((wk, t), xn) in w.iter().zip(&tn).zip(&tuple.negatives) {
                let g_n: Vec<f64> = ta.out.iter().map(|v| wk * v).collect();
                self.backward(xn.as_ref(), t, &g_n, inv, &mut grad);
            }
        }
        Ok((total * inv, grad))
    }
}

impl Embedder for Encoder {
    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn embed_slice(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let t = self.trace(x);
        if t.degenerate {
            self.degenerate.fetch_add(1, Ordering::Relaxed);
        }
        Ok(t.out)
    }
}

/// SGD settings for contrastive training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Epochs at which the learning rate is multiplied by `decay_factor`.
    pub decay_epochs: Vec<usize>,
    pub decay_factor: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub steps_per_epoch: usize,
    pub epochs: usize,
    /// Negatives per anchor.
    pub negatives: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    /// The large-scale schedule (lr 0.5 decayed at epochs 700/800/900, weight
    /// decay 0.1, batch 1024, 1000 epochs). Desk-scale runs override most of it.
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.5,
            decay_epochs: vec![700, 800, 900],
            decay_factor: 0.1,
            weight_decay: 0.1,
            batch_size: 1024,
            steps_per_epoch: 1,
            epochs: 1000,
            negatives: 4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid("learning_rate must be finite and nonnegative"));
        }
        if !(self.weight_decay >= 0.0 && self.decay_factor > 0.0) {
            return Err(invalid("weight_decay must be >= 0 and decay_factor > 0"));
        }
        if self.batch_size == 0 || self.steps_per_epoch == 0 || self.negatives == 0 {
            return Err(invalid("batch_size, steps_per_epoch and negatives must be positive"));
        }
        if self.decay_epochs.windows(2).any(|w| w[0] > w[1]) {
            return Err(invalid("decay_epochs must be sorted"));
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let drops = self.decay_epochs.iter().filter(|&&e| e <= epoch).count();
        let mut lr = self.learning_rate;
        for _ in 0..drops {
            lr *= self.decay_factor;
        }
        lr
    }
}

/// Trained encoder plus the mean training loss of every epoch.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub encoder: Encoder,
    pub trace: Vec<f64>,
}

/// SGD on the empirical InfoNCE risk with step decay and weight decay.
///
/// Every tuple is drawn fresh from `source` with its own derived seed, so the
/// run is a pure function of `(encoder, source, cfg)`.
pub fn train(encoder: &Encoder, source: &dyn TupleSource, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut enc = encoder.clone();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate_at(epoch);
        let epoch_seed = derive_seed(cfg.seed, epoch as u64);
        let mut epoch_loss = 0.0;
        for step in 0..cfg.steps_per_epoch {
            let batch = (0..cfg.batch_size)
                .map(|b| {
                    let mut rng: SimRng = rng_for(epoch_seed, (step * cfg.batch_size + b) as u64);
                    source.sample_tuple(cfg.negatives, &mut rng)
                })
                .collect::<Result<Vec<_>>>()?;
            let (loss, grad) = enc.infonce_gradient(&batch)?;
            if !loss.is_finite() {
                trace.push(loss);
                return Err(Error::NonFiniteLoss { epoch, trace });
            }
            epoch_loss += loss;
            for (p, g) in enc.params.iter_mut().zip(&grad) {
                *p -= lr * (g + cfg.weight_decay * *p);
            }
        }
        trace.push(epoch_loss / cfg.steps_per_epoch as f64);
    }
    Ok(TrainOutcome { encoder: enc, trace })
}

/// Full-batch gradient descent settings for the linear probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { epochs: 100, learning_rate: 1.0, weight_decay: 0.0 }
    }
}

/// Multinomial logistic regression on frozen embeddings; returns test accuracy.
///
/// Weights start at zero and ties in the argmax go to the lowest class id, so
/// with zero epochs every prediction is class 0.
pub fn linear_probe_embeddings(
    train: &[(Vec<f64>, usize)],
    test: &[(Vec<f64>, usize)],
    cfg: &ProbeConfig,
) -> Result<f64> {
    let Some(first) = train.first() else {
        return Err(Error::Empty("probe training set"));
    };
    if test.is_empty() {
        return Err(Error::Empty("probe test set"));
    }
    let dim = first.0.len();
    if let Some((v, _)) = train.iter().chain(test).find(|(v, _)| v.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, found: v.len() });
    }
    if train.iter().all(|(_, y)| *y == first.1) {
        return Err(invalid("linear probe needs at least two classes in the training set"));
    }
    let classes = train.iter().chain(test).map(|(_, y)| *y).max().unwrap_or(0) + 1;
    let stride = dim + 1;
    let mut w = vec![0.0; classes * stride];
    let logits = |w: &[f64], x: &[f64]| -> Vec<f64> {
        (0..classes).map(|c| dot(&w[c * stride..c * stride + dim], x) + w[c * stride + dim]).collect()
    };
    let inv = 1.0 / train.len() as f64;
    for _ in 0..cfg.epochs {
        let mut grad = vec![0.0; w.len()];
        for (x, y) in train {
            let z = logits(&w, x);
            let lse = math::log_sum_exp(z.iter().copied());
            for c in 0..classes {
                let p = math::exp(z[c] - lse) - if c == *y { 1.0 } else { 0.0 };
                let row = &mut grad[c * stride..(c + 1) * stride];
                for (g, xi) in row[..dim].iter_mut().zip(x) {
                    *g += inv * p * xi;
                }
                row[dim] += inv * p;
            }
        }
        for (wi, gi) in w.iter_mut().zip(&grad) {
            *wi -= cfg.learning_rate * (gi + cfg.weight_decay * *wi);
        }
    }
    let correct = test
        .iter()
        .filter(|(x, y)| {
            let z = logits(&w, x);
            let mut best = 0;
            for c in 1..classes {
                if z[c] > z[best] {
                    best = c;
                }
            }
            best == *y
        })
        .count();
    Ok(correct as f64 / test.len() as f64)
}

/// Embeds labeled images with `enc` and runs [`linear_probe_embeddings`].
pub fn linear_probe(
    enc: &dyn Embedder,
    train: &[(Image, usize)],
    test: &[(Image, usize)],
    cfg: &ProbeConfig,
) -> Result<f64> {
    let embed = |set: &[(Image, usize)]| -> Result<Vec<(Vec<f64>, usize)>> {
        set.iter().map(|(img, y)| Ok((enc.embed(img)?, *y))).collect()
    };
    linear_probe_embeddings(&embed(train)?, &embed(test)?, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;

    fn random_vec(n: usize, rng: &mut SimRng) -> Vec<f64> {
        (0..n).map(|_| rng.random::<f64>()).collect()
    }

    fn random_tuple(dim: usize, k: usize, rng: &mut SimRng) -> ContrastiveTuple<Vec<f64>> {
        ContrastiveTuple {
            anchor: random_vec(dim, rng),
            positive: random_vec(dim, rng),
            negatives: (0..k).map(|_| random_vec(dim, rng)).collect(),
        }
    }

    fn loss_at(enc: &Encoder, batch: &[ContrastiveTuple<Vec<f64>>]) -> f64 {
        enc.infonce_gradient(batch).unwrap().0
    }

    fn fd_relative_error(enc: &Encoder, batch: &[ContrastiveTuple<Vec<f64>>]) -> f64 {
        let (_, analytic) = enc.infonce_gradient(batch).unwrap();
        let h = 1e-6;
        let mut numeric = vec![0.0; analytic.len()];
        for i in 0..analytic.len() {
            let mut plus = enc.clone();
            plus.params[i] += h;
            let mut minus = enc.clone();
            minus.params[i] -= h;
            numeric[i] = (loss_at(&plus, batch) - loss_at(&minus, batch)) / (2.0 * h);
        }
        let diff = crate::linalg::distance(&analytic, &numeric);
        diff / norm(&analytic).max(norm(&numeric)).max(1e-12)
    }

    #[test]
    fn flatten_identity_embeds_unit_image_verbatim() {
        let img = Image::from_fn(2, |r, c, ch| (r + 2 * c + 3 * ch) as f64 + 1.0).unwrap();
        let scaled: Vec<f64> = img.as_slice().iter().map(|v| v / img.frobenius()).collect();
        let unit = Image::new(2, scaled.clone()).unwrap();
        let enc = Encoder::flatten_identity(12, true);
        let out = enc.forward(&unit).unwrap();
        for (a, b) in out.iter().zip(&scaled) {
            assert!((a - b).abs() < 1e-15);
        }
        let raw = Encoder::flatten_identity(12, false);
        assert_eq!(raw.forward(&img).unwrap(), img.as_slice());
    }

    #[test]
    fn zero_weights_trigger_degenerate_diagnostic() {
        let enc = Encoder::from_parts(Architecture::Linear, 12, 0, 3, true, vec![0.0; 36]).unwrap();
        let img = Image::constant(2, 0.5).unwrap();
        assert_eq!(enc.forward(&img).unwrap(), vec![1.0, 0.0, 0.0]);
        assert_eq!(enc.degenerate_count(), 1);
    }

    #[test]
    fn forward_is_deterministic_and_unit_norm() {
        let a = Encoder::mlp1(12, 5, 4, &mut rng_from(9));
        let b = Encoder::mlp1(12, 5, 4, &mut rng_from(9));
        let img = Image::from_fn(2, |r, c, ch| 0.1 * (r + c + ch) as f64).unwrap();
        let (ya, yb) = (a.forward(&img).unwrap(), b.forward(&img).unwrap());
        assert_eq!(ya, yb);
        assert!((norm(&ya) - 1.0).abs() < 1e-12);
        assert!(a.forward(&Image::constant(3, 0.1).unwrap()).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = rng_from(21);
        for arch in [Architecture::Linear, Architecture::Mlp1] {
            for _ in 0..5 {
                let enc = match arch {
                    Architecture::Linear => Encoder::linear(6, 3, &mut rng),
                    _ => Encoder::mlp1(6, 4, 3, &mut rng),
                };
                let batch: Vec<_> = (0..3).map(|_| random_tuple(6, 2, &mut rng)).collect();
                let err = fd_relative_error(&enc, &batch);
                assert!(err <= 1e-4, "{arch:?}: {err}");
            }
        }
    }

    #[test]
    fn gradient_matches_hand_derivation_for_two_dim_linear() {
        // L = log(1 + exp(y_a·y_n − y_a·y_p)), y = Wx/‖Wx‖, W ∈ R^{2×3}.
        let w = vec![0.3, -0.2, 0.5, 0.1, 0.4, -0.3];
        let enc = Encoder::from_parts(Architecture::Linear, 3, 0, 2, true, w.clone()).unwrap();
        let xa = [1.0, 0.5, -0.2];
        let xp = [0.8, 0.6, 0.1];
        let xn = [-0.4, 0.9, 0.7];
        let tuple = ContrastiveTuple { anchor: xa.to_vec(), positive: xp.to_vec(), negatives: vec![xn.to_vec()] };
        let (_, grad) = enc.infonce_gradient(&[tuple]).unwrap();

        let z = |x: &[f64; 3]| [w[0] * x[0] + w[1] * x[1] + w[2] * x[2], w[3] * x[0] + w[4] * x[1] + w[5] * x[2]];
        let unit = |z: [f64; 2]| {
            let n = (z[0] * z[0] + z[1] * z[1]).sqrt();
            ([z[0] / n, z[1] / n], n)
        };
        // J(z) = (I − y yᵀ)/‖z‖ as an explicit 2×2 matrix.
        let jac = |y: [f64; 2], n: f64| {
            [[(1.0 - y[0] * y[0]) / n, -y[0] * y[1] / n], [-y[1] * y[0] / n, (1.0 - y[1] * y[1]) / n]]
        };
        let (ya, na) = unit(z(&xa));
        let (yp, np) = unit(z(&xp));
        let (yn, nn) = unit(z(&xn));
        let margin = (ya[0] * yn[0] + ya[1] * yn[1]) - (ya[0] * yp[0] + ya[1] * yp[1]);
        let sig = 1.0 / (1.0 + (-margin).exp());
        let dl_dya = [sig * (yn[0] - yp[0]), sig * (yn[1] - yp[1])];
        let dl_dyp = [-sig * ya[0], -sig * ya[1]];
        let dl_dyn = [sig * ya[0], sig * ya[1]];
        let mut want = [0.0; 6];
        for (g, y, n, x) in [(dl_dya, ya, na, xa), (dl_dyp, yp, np, xp), (dl_dyn, yn, nn, xn)] {
            let j = jac(y, n);
            let gz = [j[0][0] * g[0] + j[1][0] * g[1], j[0][1] * g[0] + j[1][1] * g[1]];
            for o in 0..2 {
                for i in 0..3 {
                    want[o * 3 + i] += gz[o] * x[i];
                }
            }
        }
        for (a, b) in grad.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn duplicated_batch_has_same_gradient() {
        let mut rng = rng_from(4);
        let enc = Encoder::linear(5, 3, &mut rng);
        let t = random_tuple(5, 3, &mut rng);
        let (l1, g1) = enc.infonce_gradient(core::slice::from_ref(&t)).unwrap();
        let (l2, g2) = enc.infonce_gradient(&[t.clone(), t]).unwrap();
        assert!((l1 - l2).abs() < 1e-15);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(enc.infonce_gradient::<Vec<f64>>(&[]).is_err());
    }

    #[test]
    fn probe_tie_break_and_separable_case() {
        let train = vec![(vec![1.0, 0.0], 0), (vec![0.0, 1.0], 1), (vec![-1.0, 0.0], 2)];
        let cfg0 = ProbeConfig { epochs: 0, ..ProbeConfig::default() };
        // Zero classifier predicts class 0 everywhere.
        assert!((linear_probe_embeddings(&train, &train, &cfg0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let acc = linear_probe_embeddings(&train, &train, &ProbeConfig::default()).unwrap();
        assert_eq!(acc, 1.0);
        let single = vec![(vec![1.0, 0.0], 1), (vec![0.5, 0.0], 1)];
        assert!(linear_probe_embeddings(&single, &train, &cfg0).is_err());
    }

    #[test]
    fn learning_rate_schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.learning_rate_at(0), 0.5);
        assert!((cfg.learning_rate_at(700) - 0.05).abs() < 1e-15);
        assert!((cfg.learning_rate_at(950) - 0.0005).abs() < 1e-15);
        let mut bad = cfg;
        bad.decay_epochs = vec![800, 700];
        assert!(bad.validate().is_err());
    }
}
